"""Independent reference implementations used only by the tests.

Nothing here imports the code under test's internals; each oracle is the
slow, obvious version of what the package does.
"""

from itertools import product


def enumerate_rates(p, eta_a, eta_b, dc_a, dc_b):
    """Exact (p_a, p_b, p_ab) by walking every outcome for i <= 2 photons.

    Each photon picks an arm (1/2 each) and is detected or lost; each
    detector then draws a dark count and clicks on photon XOR dark.
    """
    pa = pb = pab = 0.0
    for i, p_i in enumerate(p):
        for arms in product("AB", repeat=i):
            for detected in product((False, True), repeat=i):
                w = p_i * 0.5 ** i
                for arm, d in zip(arms, detected):
                    eta = eta_a if arm == "A" else eta_b
                    w *= eta if d else 1.0 - eta
                ph_a = any(d and arm == "A" for arm, d in zip(arms, detected))
                ph_b = any(d and arm == "B" for arm, d in zip(arms, detected))
                for dark_a, dark_b in product((False, True), repeat=2):
                    ww = w * (dc_a if dark_a else 1 - dc_a) * (dc_b if dark_b else 1 - dc_b)
                    ca = ph_a != dark_a
                    cb = ph_b != dark_b
                    pa += ww * ca
                    pb += ww * cb
                    pab += ww * (ca and cb)
    return pa, pb, pab


def deadtime_reference(times, clicks, dead):
    """Event-by-event AND-gated dead time. Returns list of accepted flags."""
    ready_a = ready_b = float("-inf")
    out = []
    for t, (a, b) in zip(times, clicks):
        ok = t >= ready_a and t >= ready_b
        out.append(ok)
        if ok:
            if a:
                ready_a = t + dead
            if b:
                ready_b = t + dead
    return out


def ungated_reference(times, bits, dead):
    """One detector without AND gating: a click while dead reads 0."""
    ready = float("-inf")
    out = []
    for t, x in zip(times, bits):
        if x and t >= ready:
            out.append(1)
            ready = t + dead
        else:
            out.append(0)
    return out


def histogram_reference(pairs, n_max):
    """Trigger-by-trigger start/stop machine; returns (bins, starts, invalid, cancelled)."""
    bins = {}
    starts = invalid = cancelled = 0
    state = None  # ("A" | "B", origin)
    k = 0
    while k < len(pairs):
        a, b = pairs[k]
        if state is not None:
            det, origin = state
            if k - origin > n_max:
                cancelled += 1
                state = None
                continue
            stop = b if det == "A" else a
            again = a if det == "A" else b
            if stop:
                n = (k - origin) if det == "A" else -(k - origin)
                bins[n] = bins.get(n, 0) + 1
                state = None
            elif again:
                invalid += 1
        elif a or b:
            starts += 1
            if a and b:
                bins[0] = bins.get(0, 0) + 1
            else:
                state = ("A" if a else "B", k)
        k += 1
    if state is not None:
        cancelled += 1
    return bins, starts, invalid, cancelled
