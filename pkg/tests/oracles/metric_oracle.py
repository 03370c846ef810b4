"""Loop-based reference for exact match and token F1.

Deliberately naive: character loops for normalization, list removal for the
multiset intersection. Shares no code with ``visionreader.metrics``.
"""


def _norm(text, normalize):
    if not normalize:
        return text
    words = []
    current = ""
    for ch in text:
        if ch.isspace():
            if current:
                words.append(current)
                current = ""
        else:
            current += ch
    if current:
        words.append(current)
    return " ".join(words).lower()


def _words(text):
    out = []
    current = ""
    for ch in text:
        if ch.isspace():
            if current:
                out.append(current)
            current = ""
        else:
            current += ch
    if current:
        out.append(current)
    return out


def ref_exact_match(ga, pa, normalize=True):
    return 1 if _norm(ga, normalize) == _norm(pa, normalize) else 0


def ref_token_f1(ga, pa, normalize=True, literal_eq9=False):
    gt = _words(_norm(ga, normalize))
    pt = _words(_norm(pa, normalize))
    if len(gt) == 0 or len(pt) == 0:
        return 0.0, 0.0, 0.0
    remaining = list(gt)
    common = 0
    for tok in pt:
        for i in range(len(remaining)):
            if remaining[i] == tok:
                del remaining[i]
                common += 1
                break
    if common == 0:
        return 0.0, 0.0, 0.0
    p = common / len(pt)
    r = common / len(gt)
    if literal_eq9:
        return p, r, p * r / (p + r)
    return p, r, 2 * p * r / (p + r)
