"""Independent reference implementations used by the tests."""

import numpy as np

from seizurecast.pipeline import (
    EXCLUDED_STATE,
    HOUR,
    ICTAL_STATE,
    INTERICTAL,
    INTERICTAL_STATE,
    PREICTAL,
    PREICTAL_STATE,
    SPH_STATE,
    Recording,
    TimingPolicy,
    extract_windows,
    label_intervals,
    window_count,
)

STATE_CODES = {EXCLUDED_STATE: 0, INTERICTAL_STATE: 1, PREICTAL_STATE: 2, SPH_STATE: 3, ICTAL_STATE: 4}


def sample_states(seizures, n_samples, rate, policy):
    """State code of every sample time ``i / rate``, straight from the definitions."""
    t = np.arange(n_samples) / rate
    state = np.zeros(n_samples, dtype=np.int64)

    far = np.ones(n_samples, dtype=bool)
    for on, off in seizures:
        far &= (t < on - policy.interictal_margin_s) | (t >= off + policy.interictal_margin_s)
    state[far] = STATE_CODES[INTERICTAL_STATE]

    prev_off = None
    for on, off in seizures:
        lead = on >= policy.pil_s + policy.sph_s and (
            prev_off is None or on - prev_off >= policy.lead_gap_s
        )
        prev_off = off
        if lead:
            pre = (t >= on - policy.sph_s - policy.pil_s) & (t < on - policy.sph_s)
            state[pre & (state < STATE_CODES[PREICTAL_STATE])] = STATE_CODES[PREICTAL_STATE]
            sph = (t >= on - policy.sph_s) & (t < on)
            state[sph & (state < STATE_CODES[SPH_STATE])] = STATE_CODES[SPH_STATE]
    for on, off in seizures:
        state[(t >= on) & (t < off)] = STATE_CODES[ICTAL_STATE]
    return state


def greedy_windows(states, rate, policy):
    """Slide through maximal same-state runs sample by sample, placing windows greedily."""
    wp = int(round(policy.window_s * rate))
    strides = {
        STATE_CODES[INTERICTAL_STATE]: (int(round(policy.window_s * rate)), INTERICTAL),
        STATE_CODES[PREICTAL_STATE]: (int(round(policy.preictal_stride_s * rate)), PREICTAL),
    }
    out = []
    i, n = 0, len(states)
    while i < n:
        j = i
        while j < n and states[j] == states[i]:
            j += 1
        if states[i] in strides:
            stride, label = strides[states[i]]
            pos = i
            while pos + wp <= j:
                out.append((pos, label))
                pos += stride
        i = j
    return out


def random_schedule(rng):
    """Random seizure schedule on a zero signal, plus a random timing policy."""
    rate = float(rng.choice([1, 2, 4]))
    policy = TimingPolicy(
        pil_s=float(rng.choice([600, 1200, 1800])),
        sph_s=float(rng.choice([0, 120, 300])),
        lead_gap_s=float(rng.choice([1800, 3600, 4 * HOUR])),
        interictal_margin_s=float(rng.choice([900, 2400, 4 * HOUR])),
    )
    dur = float(rng.integers(3, 16)) * HOUR
    seizures, t = [], float(rng.integers(0, 3 * HOUR))
    while True:
        length = float(rng.integers(10, 300))
        if t + length > dur:
            break
        seizures.append((t, t + length))
        t += length + float(rng.integers(1, 6 * HOUR))
    n = int(round(dur * rate))
    return Recording("s", rate, ["c0"], np.zeros((1, n)), seizures), policy


def compare_with_bruteforce(rec, policy):
    """Mismatches between the pipeline and the per-sample enumerators (empty when they agree)."""
    problems = []
    ivs = label_intervals(rec, policy)
    raster = np.empty(rec.n_samples, dtype=np.int64)
    t = np.arange(rec.n_samples) / rec.sample_rate_hz
    for iv in ivs:
        raster[(t >= iv.start_s) & (t < iv.end_s)] = STATE_CODES[iv.state]
    oracle = sample_states(rec.seizures, rec.n_samples, rec.sample_rate_hz, policy)
    bad = np.flatnonzero(raster != oracle)
    if bad.size:
        problems.append(f"{bad.size} samples labelled differently, first at t={t[bad[0]]}")

    got = [(int(round(w.source_time_s * rec.sample_rate_hz)), w.label) for w in extract_windows(rec, ivs, policy)]
    want = greedy_windows(oracle, rec.sample_rate_hz, policy)
    if got != want:
        problems.append(f"{len(got)} windows extracted, enumerator placed {len(want)}")
    counted = sum(window_count(iv.length_s, iv.state, policy) for iv in ivs)
    if counted != len(want):
        problems.append(f"closed-form count {counted} != enumerated {len(want)}")
    return problems


def pairwise_auc(scores, labels):
    """Probability a random positive outranks a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = 0.0
    for p in pos:
        wins += np.count_nonzero(p > neg) + 0.5 * np.count_nonzero(p == neg)
    return wins / (len(pos) * len(neg))


def adam_scalar(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Plain-float Adam trace for one scalar parameter."""
    m = v = 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (vhat ** 0.5 + eps)
        trace.append(theta)
    return trace
