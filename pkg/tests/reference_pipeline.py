"""Straight-line scalar reimplementation of the per-sample pipeline.

Deliberately naive: explicit loops over compositions, no shared code
with the package. Used only as an independent oracle for the engine's
end-to-end test. Mirrors the same order of operations: refine textual ->
admission entropy/pseudo-label -> queue update -> refine visual ->
fused prediction -> loss gradients -> one AdamW step.
"""

import math

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def _softmax(xs):
    m = max(xs)
    es = [math.exp(x - m) for x in xs]
    z = sum(es)
    return [e / z for e in es]


def _entropy(ps):
    return -sum(p * math.log(p) for p in ps if p > 0.0)


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def reference_run(bank_proto, tau, features, config):
    """Run the full pipeline; returns (delta_t, delta_v) after the stream."""
    C, d = bank_proto.shape
    K = config.K
    theta = config.theta
    alpha = config.alpha
    beta = config.beta
    lam = config.lam
    lr = config.lr
    b1, b2 = config.adamw_betas
    eps = config.adamw_eps
    wd = config.adamw_weight_decay

    delta_t = np.zeros((C, d))
    delta_v = np.zeros((C, d))
    m_t = np.zeros((C, d))
    u_t = np.zeros((C, d))
    m_v = np.zeros((C, d))
    u_v = np.zeros((C, d))
    queues = [[] for _ in range(C)]  # entries (h, arrival, feature)
    arrival = 0
    step = 0

    for f in features:
        # adaptive weights from the frozen base prototypes
        w_t = np.array([_sigmoid(-theta * float(np.dot(f, bank_proto[c])))
                        for c in range(C)])
        # textual refinement
        t_tilde = np.zeros((C, d))
        z_norms = np.zeros(C)
        for c in range(C):
            z = bank_proto[c] + w_t[c] * delta_t[c]
            z_norms[c] = _norm(z)
            t_tilde[c] = z / z_norms[c]

        # admission entropy and pseudo-label, temperature softmax
        adm = _softmax([float(np.dot(f, t_tilde[c])) / tau for c in range(C)])
        h = _entropy(adm)
        c_p = max(range(C), key=lambda c: (adm[c], -c))

        # queue update (strictly-lower-entropy replacement)
        q = queues[c_p]
        if len(q) < K:
            q.append((h, arrival, f))
        else:
            worst = max(range(len(q)), key=lambda i: (q[i][0], q[i][1]))
            if h < q[worst][0]:
                q[worst] = (h, arrival, f)
        arrival += 1

        # visual prototypes from queue means
        present = [len(queues[c]) > 0 for c in range(C)]
        v_tilde = np.zeros((C, d))
        y_norms = np.ones(C)
        w_v = np.zeros(C)
        for c in range(C):
            if not present[c]:
                continue
            mean = sum(e[2] for e in queues[c]) / len(queues[c])
            if config.visual_weight_source == "textual":
                w_v[c] = w_t[c]
            else:
                unit = mean / _norm(mean)
                w_v[c] = _sigmoid(-theta * float(np.dot(f, unit)))
            y = mean + w_v[c] * delta_v[c]
            y_norms[c] = _norm(y)
            v_tilde[c] = y / y_norms[c]

        # fused prediction
        aff = np.zeros(C)
        logits = []
        for c in range(C):
            logit = float(np.dot(f, t_tilde[c]))
            if present[c]:
                aff[c] = math.exp(-beta * (1.0 - float(np.dot(f, v_tilde[c]))))
                logit += alpha * aff[c]
            logits.append(logit)
        p = _softmax(logits)
        H = _entropy(p)

        # entropy-loss gradient wrt refined prototypes
        dT = np.zeros((C, d))
        dV = np.zeros((C, d))
        for c in range(C):
            g_logit = -p[c] * (math.log(p[c]) + H) if p[c] > 0 else 0.0
            dT[c] = g_logit * f
            if present[c]:
                dV[c] = g_logit * alpha * beta * aff[c] * f

        # alignment loss gradient over present compositions
        idxs = [c for c in range(C) if present[c]]
        mlen = len(idxs)
        if lam != 0.0 and mlen >= 2:
            S = np.zeros((mlen, mlen))
            for i, ci in enumerate(idxs):
                for j, cj in enumerate(idxs):
                    S[i, j] = float(np.dot(t_tilde[ci], v_tilde[cj])) / tau
            P = np.zeros((mlen, mlen))
            Q = np.zeros((mlen, mlen))
            for i in range(mlen):
                row = _softmax(list(S[i, :]))
                for j in range(mlen):
                    P[i, j] = row[j]
            for j in range(mlen):
                col = _softmax(list(S[:, j]))
                for i in range(mlen):
                    Q[i, j] = col[i]
            G = (P + Q - 2.0 * np.eye(mlen)) / (2.0 * mlen)
            for i, ci in enumerate(idxs):
                acc_t = np.zeros(d)
                acc_v = np.zeros(d)
                for j, cj in enumerate(idxs):
                    acc_t += G[i, j] * v_tilde[cj]
                    acc_v += G[j, i] * t_tilde[cj]
                dT[ci] += lam * acc_t / tau
                dV[ci] += lam * acc_v / tau

        # chain through the normalization back to the deltas
        g_t = np.zeros((C, d))
        g_v = np.zeros((C, d))
        for c in range(C):
            proj = dT[c] - float(np.dot(dT[c], t_tilde[c])) * t_tilde[c]
            g_t[c] = (w_t[c] / z_norms[c]) * proj
            if present[c]:
                proj = dV[c] - float(np.dot(dV[c], v_tilde[c])) * v_tilde[c]
                g_v[c] = (w_v[c] / y_norms[c]) * proj

        # one AdamW step, decoupled decay
        step += 1
        bc1 = 1.0 - b1 ** step
        bc2 = 1.0 - b2 ** step
        for p_mat, g_mat, m_mat, u_mat in ((delta_t, g_t, m_t, u_t),
                                           (delta_v, g_v, m_v, u_v)):
            for c in range(C):
                for k in range(d):
                    g = g_mat[c, k]
                    m_mat[c, k] = b1 * m_mat[c, k] + (1 - b1) * g
                    u_mat[c, k] = b2 * u_mat[c, k] + (1 - b2) * g * g
                    m_hat = m_mat[c, k] / bc1
                    u_hat = u_mat[c, k] / bc2
                    p_mat[c, k] -= lr * (m_hat / (math.sqrt(u_hat) + eps)
                                         + wd * p_mat[c, k])

    return delta_t, delta_v
