"""Straight-line reference implementations used to cross-check the fast paths.

Everything here is written with Python scalars, explicit loops and the
``math`` module only. Nothing calls into :mod:`hodinet.tensor`, the kernels or
numpy reductions, so a transcription error in the vectorised code cannot be
reproduced here by construction. These are slow; use them on small inputs.
"""
import math

SPACING = 2.220446049250313e-16  # np.spacing(1.0)


def _zeros(*shape):
    if len(shape) == 1:
        return [0.0] * shape[0]
    return [_zeros(*shape[1:]) for _ in range(shape[0])]


def _tolist(a):
    return a.tolist() if hasattr(a, "tolist") else a


def _sigmoid(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def conv2d(x, w, b, stride=1, pad=0):
    """x: [n][c][h][w], w: [o][c][k][k], b: [o] or None."""
    x, w = _tolist(x), _tolist(w)
    b = _tolist(b) if b is not None else None
    n, c, h, wd = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    o, k = len(w), len(w[0][0])
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = _zeros(n, o, oh, ow)
    for bi in range(n):
        for oc in range(o):
            for i in range(oh):
                for j in range(ow):
                    s = b[oc] if b is not None else 0.0
                    for ci in range(c):
                        for ki in range(k):
                            for kj in range(k):
                                y = i * stride + ki - pad
                                xx = j * stride + kj - pad
                                if 0 <= y < h and 0 <= xx < wd:
                                    s += w[oc][ci][ki][kj] * x[bi][ci][y][xx]
                    out[bi][oc][i][j] = s
    return out


def batchnorm(x, gamma, beta, mean=None, var=None, eps=1e-5):
    """Training statistics when ``mean``/``var`` are None, else the given running stats."""
    x = _tolist(x)
    gamma, beta = _tolist(gamma), _tolist(beta)
    n, c, h, w = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    out = _zeros(n, c, h, w)
    for ch in range(c):
        if mean is None:
            vals = [x[b][ch][i][j] for b in range(n) for i in range(h) for j in range(w)]
            mu = sum(vals) / len(vals)
            va = sum((v - mu) ** 2 for v in vals) / len(vals)
        else:
            mu, va = float(mean[ch]), float(var[ch])
        inv = 1.0 / math.sqrt(va + eps)
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    out[b][ch][i][j] = (x[b][ch][i][j] - mu) * inv * gamma[ch] + beta[ch]
    return out


def relu(x):
    if isinstance(x, list):
        return [relu(v) for v in x]
    return x if x > 0 else 0.0


def conv_bn_relu(x, p, training=True):
    y = conv2d(x, p["w"], p["b"], 1, 0)
    if training:
        y = batchnorm(y, p["gamma"], p["beta"])
    else:
        y = batchnorm(y, p["gamma"], p["beta"], p["mean"], p["var"])
    return relu(y)


def bilinear_resize(x, oh, ow):
    """Half-pixel bilinear resampling of one [h][w] map."""
    x = _tolist(x)
    h, w = len(x), len(x[0])

    def src(o, n_in, n_out):
        s = (o + 0.5) * n_in / n_out - 0.5
        s = max(s, 0.0)
        i0 = min(int(math.floor(s)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        return i0, i1, (s - i0 if i0 < n_in - 1 else 0.0)

    out = _zeros(oh, ow)
    for i in range(oh):
        y0, y1, fy = src(i, h, oh)
        for j in range(ow):
            x0, x1, fx = src(j, w, ow)
            out[i][j] = ((1 - fy) * ((1 - fx) * x[y0][x0] + fx * x[y0][x1])
                         + fy * ((1 - fx) * x[y1][x0] + fx * x[y1][x1]))
    return out


# ---------------------------------------------------------------------------
# fusion blocks
# ---------------------------------------------------------------------------

def hosf(F_rgb, F_depth, params, training=True):
    """Aligned maps -> correlation -> signed sqrt -> row l2 -> attention; depth weight; residual.

    ``params`` holds ``rgb``/``depth`` conv-bn dicts and ``dw_a``/``dw_b`` (w, b) pairs.
    """
    r = conv_bn_relu(F_rgb, params["rgb"], training)
    d = conv_bn_relu(F_depth, params["depth"], training)
    n, c, h, w = len(r), len(r[0]), len(r[0][0]), len(r[0][0][0])
    hw = h * w
    out = _zeros(n, c, h, w)
    wa, ba = _tolist(params["dw_a"][0]), _tolist(params["dw_a"][1])
    wb, bb = _tolist(params["dw_b"][0]), _tolist(params["dw_b"][1])
    for b in range(n):
        def rv(ch, p):
            return r[b][ch][p // w][p % w]

        def dv(ch, p):
            return d[b][ch][p // w][p % w]

        norm_rows = []
        for p in range(hw):
            row = []
            for q in range(hw):
                s = 0.0
                for ch in range(c):
                    s += rv(ch, p) * dv(ch, q)
                m = math.copysign(math.sqrt(abs(s)), s) if s != 0 else 0.0
                row.append(m)
            length = math.sqrt(sum(v * v for v in row))
            norm_rows.append([v / (length + 1e-12) for v in row])
        att = _zeros(hw, c)
        for p in range(hw):
            for ch in range(c):
                s = 0.0
                for q in range(hw):
                    s += norm_rows[p][q] * rv(ch, q)
                att[p][ch] = s
        pooled = [max(dv(ch, p) for p in range(hw)) for ch in range(c)]
        mid = [ba[o] + sum(wa[o][ch][1][1] * pooled[ch] for ch in range(c)) for o in range(c)]
        dw = [_sigmoid(bb[o] + sum(wb[o][ch][1][1] * mid[ch] for ch in range(c))) for o in range(c)]
        for ch in range(c):
            for p in range(hw):
                out[b][ch][p // w][p % w] = att[p][ch] * dw[ch] + rv(ch, p)
    return out


def hocf(F_rgb, F_depth, params, training=True, row_first=True):
    """Aligned maps -> pooled outer product -> row/col max -> FC -> sigmoid -> residual."""
    r = conv_bn_relu(F_rgb, params["rgb"], training)
    d = conv_bn_relu(F_depth, params["depth"], training)
    fw, fb = _tolist(params["fc"][0]), _tolist(params["fc"][1])
    n, c, h, w = len(r), len(r[0]), len(r[0][0]), len(r[0][0][0])
    out = _zeros(n, c, h, w)
    for b in range(n):
        a_r = [sum(r[b][ch][i][j] for i in range(h) for j in range(w)) / (h * w) for ch in range(c)]
        a_d = [sum(d[b][ch][i][j] for i in range(h) for j in range(w)) / (h * w) for ch in range(c)]
        inter = [[a_r[j] * a_d[k] for k in range(c)] for j in range(c)]
        row_max = [max(inter[j]) for j in range(c)]
        col_max = [max(inter[j][k] for j in range(c)) for k in range(c)]
        feat = row_max + col_max if row_first else col_max + row_max
        weights = [_sigmoid(fb[o] + sum(fw[o][i] * feat[i] for i in range(2 * c))) for o in range(c)]
        for ch in range(c):
            for i in range(h):
                for j in range(w):
                    out[b][ch][i][j] = weights[ch] * d[b][ch][i][j] + r[b][ch][i][j]
    return out


# ---------------------------------------------------------------------------
# losses (single image [h][w])
# ---------------------------------------------------------------------------

def bce(p, g, clamp=1e-7):
    p, g = _tolist(p), _tolist(g)
    s = 0.0
    for prow, grow in zip(p, g):
        for pv, gv in zip(prow, grow):
            pv = min(max(pv, clamp), 1.0 - clamp)
            s -= gv * math.log(pv) + (1.0 - gv) * math.log(1.0 - pv)
    return s


def ssim_loss(p, g, size=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """1 - mean SSIM over every valid ``size`` x ``size`` Gaussian window."""
    p, g = _tolist(p), _tolist(g)
    h, w = len(p), len(p[0])
    if h < size or w < size:
        windows = [(0, 0, h, w, [[1.0 / (h * w)] * w for _ in range(h)])]
    else:
        taps = [math.exp(-((i - size // 2) ** 2) / (2 * sigma * sigma)) for i in range(size)]
        tot = sum(taps)
        taps = [t / tot for t in taps]
        kern = [[taps[i] * taps[j] for j in range(size)] for i in range(size)]
        windows = [(i, j, size, size, kern) for i in range(h - size + 1) for j in range(w - size + 1)]
    total = 0.0
    for i0, j0, kh, kw, kern in windows:
        mp = mg = 0.0
        for i in range(kh):
            for j in range(kw):
                mp += kern[i][j] * p[i0 + i][j0 + j]
                mg += kern[i][j] * g[i0 + i][j0 + j]
        vp = vg = cv = 0.0
        for i in range(kh):
            for j in range(kw):
                a = p[i0 + i][j0 + j] - mp
                bb = g[i0 + i][j0 + j] - mg
                vp += kern[i][j] * a * a
                vg += kern[i][j] * bb * bb
                cv += kern[i][j] * a * bb
        total += ((2 * mp * mg + c1) * (2 * cv + c2)) / ((mp * mp + mg * mg + c1) * (vp + vg + c2))
    return 1.0 - total / len(windows)


def iou_loss(p, g, eps=1e-7):
    p, g = _tolist(p), _tolist(g)
    inter = union = 0.0
    for prow, grow in zip(p, g):
        for pv, gv in zip(prow, grow):
            inter += pv * gv
            union += pv + gv - pv * gv
    return 1.0 - inter / (union + eps)


# ---------------------------------------------------------------------------
# metrics (single image [h][w], g binary)
# ---------------------------------------------------------------------------

def _binary(g):
    return [[1 if v > 0.5 else 0 for v in row] for row in _tolist(g)]


def mae(p, g):
    p, g = _tolist(p), _binary(g)
    tot, cnt = 0.0, 0
    for prow, grow in zip(p, g):
        for pv, gv in zip(prow, grow):
            tot += abs(pv - gv)
            cnt += 1
    return tot / cnt


def _mean(vals):
    return sum(vals) / len(vals)


def _std1(vals):
    if len(vals) < 2:
        return 0.0
    m = _mean(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def _region_ssim(pv, gv):
    n = len(pv)
    x, y = _mean(pv), _mean(gv)
    if n > 1:
        sx = sum((a - x) ** 2 for a in pv) / (n - 1)
        sy = sum((b - y) ** 2 for b in gv) / (n - 1)
        sxy = sum((a - x) * (b - y) for a, b in zip(pv, gv)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + SPACING)
    return 1.0 if beta == 0 else 0.0


def s_measure(p, g, alpha=0.5):
    p, g = _tolist(p), _binary(g)
    h, w = len(g), len(g[0])
    n = h * w
    fg_count = sum(sum(row) for row in g)
    if fg_count == 0:
        return 1.0 - sum(sum(row) for row in p) / n
    if fg_count == n:
        return sum(sum(row) for row in p) / n
    # object term: foreground map p*g and background map (1-p)*(1-g), scored on their own regions
    fg_vals = [p[i][j] for i in range(h) for j in range(w) if g[i][j]]
    bg_vals = [1.0 - p[i][j] for i in range(h) for j in range(w) if not g[i][j]]

    def score(vals):
        m = _mean(vals)
        return 2 * m / (m * m + 1 + _std1(vals) + SPACING)

    u = fg_count / n
    obj = u * score(fg_vals) + (1 - u) * score(bg_vals)
    # region term: split at the rounded ground-truth centroid
    sum_r = sum(i for i in range(h) for j in range(w) if g[i][j])
    sum_c = sum(j for i in range(h) for j in range(w) if g[i][j])
    cy = int(math.floor(sum_r / fg_count + 0.5)) + 1
    cx = int(math.floor(sum_c / fg_count + 0.5)) + 1
    reg = 0.0
    for r0, r1, c0, c1 in ((0, cy, 0, cx), (0, cy, cx, w), (cy, h, 0, cx), (cy, h, cx, w)):
        pv = [p[i][j] for i in range(r0, r1) for j in range(c0, c1)]
        gv = [float(g[i][j]) for i in range(r0, r1) for j in range(c0, c1)]
        if not pv:
            continue
        reg += len(pv) / n * _region_ssim(pv, gv)
    return max(alpha * obj + (1 - alpha) * reg, 0.0)


def f_measure_max(p, g, beta2=0.3):
    p, g = _tolist(p), _binary(g)
    best = 0.0
    fg_total = sum(sum(row) for row in g)
    if fg_total == 0:
        return 0.0
    for k in range(256):
        t = k / 255.0
        tp = fp = 0
        for prow, grow in zip(p, g):
            for pv, gv in zip(prow, grow):
                if pv >= t:
                    if gv:
                        tp += 1
                    else:
                        fp += 1
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / fg_total
        den = beta2 * prec + rec
        f = (1 + beta2) * prec * rec / den if den > 0 else 0.0
        best = max(best, f)
    return best


def e_measure_max(p, g):
    p, g = _tolist(p), _binary(g)
    h, w = len(g), len(g[0])
    n = h * w
    fg_total = sum(sum(row) for row in g)
    mu_g = fg_total / n
    best = 0.0
    for k in range(256):
        t = k / 255.0
        fm = [[1.0 if p[i][j] >= t else 0.0 for j in range(w)] for i in range(h)]
        if fg_total == 0:
            enhanced = [[1.0 - fm[i][j] for j in range(w)] for i in range(h)]
        elif fg_total == n:
            enhanced = fm
        else:
            mu_p = sum(sum(row) for row in fm) / n
            enhanced = _zeros(h, w)
            for i in range(h):
                for j in range(w):
                    a = fm[i][j] - mu_p
                    b = g[i][j] - mu_g
                    align = 2 * a * b / (a * a + b * b + SPACING)
                    enhanced[i][j] = (align + 1) ** 2 / 4
        score = sum(sum(row) for row in enhanced) / n
        best = max(best, score)
    return best
