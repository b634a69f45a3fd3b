"""Assemble the reference swing-model parameter file for the New England 10-machine system.

Runs an AC power flow on the 39-bus network, converts loads to constant
admittances, attaches each generator's internal EMF behind its transient
reactance and Kron-reduces the network onto the 10 internal nodes.  The
resulting G, B, E, Pm and H arrays are written in the JSON layout read by
``zubovnet.dynsys.load_swing_params``.

Usage::

    python tools/build_ieee39_params.py src/zubovnet/data/ieee39_swing.json
"""

import json
import sys

import numpy as np
from scipy.optimize import root

BASE_MVA = 100.0
NBUS = 39

# (from, to, R, X, B, tap); tap 0 means nominal
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 0.0),
    (1, 39, 0.0010, 0.0250, 0.7500, 0.0),
    (2, 3, 0.0013, 0.0151, 0.2572, 0.0),
    (2, 25, 0.0070, 0.0086, 0.1460, 0.0),
    (3, 4, 0.0013, 0.0213, 0.2214, 0.0),
    (3, 18, 0.0011, 0.0133, 0.2138, 0.0),
    (4, 5, 0.0008, 0.0128, 0.1342, 0.0),
    (4, 14, 0.0008, 0.0129, 0.1382, 0.0),
    (5, 6, 0.0002, 0.0026, 0.0434, 0.0),
    (5, 8, 0.0008, 0.0112, 0.1476, 0.0),
    (6, 7, 0.0006, 0.0092, 0.1130, 0.0),
    (6, 11, 0.0007, 0.0082, 0.1389, 0.0),
    (7, 8, 0.0004, 0.0046, 0.0780, 0.0),
    (8, 9, 0.0023, 0.0363, 0.3804, 0.0),
    (9, 39, 0.0010, 0.0250, 1.2000, 0.0),
    (10, 11, 0.0004, 0.0043, 0.0729, 0.0),
    (10, 13, 0.0004, 0.0043, 0.0729, 0.0),
    (13, 14, 0.0009, 0.0101, 0.1723, 0.0),
    (14, 15, 0.0018, 0.0217, 0.3660, 0.0),
    (15, 16, 0.0009, 0.0094, 0.1710, 0.0),
    (16, 17, 0.0007, 0.0089, 0.1342, 0.0),
    (16, 19, 0.0016, 0.0195, 0.3040, 0.0),
    (16, 21, 0.0008, 0.0135, 0.2548, 0.0),
    (16, 24, 0.0003, 0.0059, 0.0680, 0.0),
    (17, 18, 0.0007, 0.0082, 0.1319, 0.0),
    (17, 27, 0.0013, 0.0173, 0.3216, 0.0),
    (21, 22, 0.0008, 0.0140, 0.2565, 0.0),
    (22, 23, 0.0006, 0.0096, 0.1846, 0.0),
    (23, 24, 0.0022, 0.0350, 0.3610, 0.0),
    (25, 26, 0.0032, 0.0323, 0.5130, 0.0),
    (26, 27, 0.0014, 0.0147, 0.2396, 0.0),
    (26, 28, 0.0043, 0.0474, 0.7802, 0.0),
    (26, 29, 0.0057, 0.0625, 1.0290, 0.0),
    (28, 29, 0.0014, 0.0151, 0.2490, 0.0),
    (12, 11, 0.0016, 0.0435, 0.0, 1.006),
    (12, 13, 0.0016, 0.0435, 0.0, 1.006),
    (6, 31, 0.0000, 0.0250, 0.0, 1.070),
    (10, 32, 0.0000, 0.0200, 0.0, 1.070),
    (19, 33, 0.0007, 0.0142, 0.0, 1.070),
    (20, 34, 0.0009, 0.0180, 0.0, 1.009),
    (22, 35, 0.0000, 0.0143, 0.0, 1.025),
    (23, 36, 0.0005, 0.0272, 0.0, 1.000),
    (25, 37, 0.0006, 0.0232, 0.0, 1.025),
    (2, 30, 0.0000, 0.0181, 0.0, 1.025),
    (29, 38, 0.0008, 0.0156, 0.0, 1.025),
    (19, 20, 0.0007, 0.0138, 0.0, 1.060),
]

LOAD_MW = {3: 322.0, 4: 500.0, 7: 233.8, 8: 522.0, 12: 7.5, 15: 320.0, 16: 329.0,
           18: 158.0, 20: 628.0, 21: 274.0, 23: 247.5, 24: 308.6, 25: 224.0,
           26: 139.0, 27: 281.0, 28: 206.0, 29: 283.5, 31: 9.2, 39: 1104.0}
LOAD_MVAR = {3: 2.4, 4: 184.0, 7: 84.0, 8: 176.0, 12: 88.0, 15: 153.0, 16: 32.3,
             18: 30.0, 20: 103.0, 21: 115.0, 23: 84.6, 24: -92.0, 25: 47.2,
             26: 17.0, 27: 75.5, 28: 27.6, 29: 26.9, 31: 4.6, 39: 250.0}

# generator i sits on bus 29 + i; bus 31 is the power-flow slack
GEN_BUS = list(range(30, 40))
SLACK_BUS = 31
VSET = [1.0475, 0.9820, 0.9831, 0.9972, 1.0123, 1.0493, 1.0635, 1.0278, 1.0265, 1.0300]
PG_MW = [250.0, 0.0, 650.0, 632.0, 508.0, 650.0, 560.0, 540.0, 830.0, 1000.0]
H = [42.0, 30.3, 35.8, 28.6, 26.0, 34.8, 26.4, 24.3, 34.5, 500.0]
XD_PRIME = [0.0310, 0.0697, 0.0531, 0.0436, 0.1320, 0.0500, 0.0490, 0.0570, 0.0570, 0.0060]
F0 = 60.0
DAMPING = 20.0
# rotor angles reported for this system's operating point
DELTA_GUESS = [-0.0335, 0.0470, 0.1586, 0.1641, 0.1114, 0.1726, 0.2220, 0.1243, 0.2723, -0.1726]


def build_ybus():
    Y = np.zeros((NBUS, NBUS), dtype=complex)
    for f, t, r, x, b, tap in BRANCHES:
        f, t = f - 1, t - 1
        y = 1.0 / complex(r, x)
        a = tap if tap else 1.0
        Y[f, f] += (y + 0.5j * b) / (a * a)
        Y[t, t] += y + 0.5j * b
        Y[f, t] -= y / a
        Y[t, f] -= y / a
    return Y


def solve_power_flow(Y):
    P_load = np.zeros(NBUS)
    Q_load = np.zeros(NBUS)
    for bus, mw in LOAD_MW.items():
        P_load[bus - 1] = mw / BASE_MVA
    for bus, mvar in LOAD_MVAR.items():
        Q_load[bus - 1] = mvar / BASE_MVA
    P_gen = np.zeros(NBUS)
    Vm = np.ones(NBUS)
    for bus, v, pg in zip(GEN_BUS, VSET, PG_MW):
        P_gen[bus - 1] = pg / BASE_MVA
        Vm[bus - 1] = v

    slack = SLACK_BUS - 1
    gen_idx = {b - 1 for b in GEN_BUS}
    ang_idx = [i for i in range(NBUS) if i != slack]
    pq_idx = [i for i in range(NBUS) if i not in gen_idx]

    def unpack(u):
        th = np.zeros(NBUS)
        v = Vm.copy()
        th[ang_idx] = u[:len(ang_idx)]
        v[pq_idx] = u[len(ang_idx):]
        return th, v

    def mismatch(u):
        th, v = unpack(u)
        V = v * np.exp(1j * th)
        S = V * np.conj(Y @ V)
        dP = (P_gen - P_load) - S.real
        dQ = -Q_load - S.imag
        return np.concatenate([dP[ang_idx], dQ[pq_idx]])

    u0 = np.concatenate([np.zeros(len(ang_idx)), np.ones(len(pq_idx))])
    sol = root(mismatch, u0, method="hybr", options={"xtol": 1e-13})
    if not sol.success or np.max(np.abs(mismatch(sol.x))) > 1e-9:
        raise RuntimeError(f"power flow did not converge: {sol.message}")
    th, v = unpack(sol.x)
    V = v * np.exp(1j * th)
    S = V * np.conj(Y @ V)
    S_gen = S + (P_load + 1j * Q_load)
    return V, S_gen, P_load, Q_load


def reduce_to_internal_nodes(Y, V, S_gen, P_load, Q_load):
    gen = [b - 1 for b in GEN_BUS]
    Yl = Y.copy()
    Yl[np.diag_indices(NBUS)] += (P_load - 1j * Q_load) / np.abs(V) ** 2

    m = len(gen)
    y_gen = 1.0 / (1j * np.array(XD_PRIME))
    Yext = np.zeros((NBUS + m, NBUS + m), dtype=complex)
    Yext[:NBUS, :NBUS] = Yl
    for k, bus in enumerate(gen):
        i = NBUS + k
        Yext[i, i] += y_gen[k]
        Yext[bus, bus] += y_gen[k]
        Yext[i, bus] -= y_gen[k]
        Yext[bus, i] -= y_gen[k]

    keep = list(range(NBUS, NBUS + m))
    elim = list(range(NBUS))
    Yred = Yext[np.ix_(keep, keep)] - Yext[np.ix_(keep, elim)] @ np.linalg.solve(
        Yext[np.ix_(elim, elim)], Yext[np.ix_(elim, keep)])

    Vg = V[gen]
    Ig = np.conj(S_gen[gen] / Vg)
    Eint = Vg + 1j * np.array(XD_PRIME) * Ig
    Pe = (Eint * np.conj(Yred @ Eint)).real
    return Yred, Eint, Pe


def main(path):
    Y = build_ybus()
    V, S_gen, P_load, Q_load = solve_power_flow(Y)
    Yred, Eint, Pe = reduce_to_internal_nodes(Y, V, S_gen, P_load, Q_load)
    out = {
        "m": len(GEN_BUS),
        "f0": F0,
        "D": DAMPING,
        "H": H,
        "E": np.abs(Eint).tolist(),
        "Pm": Pe.tolist(),
        "G": Yred.real.tolist(),
        "B": Yred.imag.tolist(),
        "delta_guess": DELTA_GUESS,
        "comment": ("New England 10-machine classical model; power flow + constant-impedance "
                    "loads + Kron reduction to internal EMF nodes; 100 MVA base; "
                    "delta_pf holds the power-flow internal angles"),
        "delta_pf": np.angle(Eint).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    print("internal angles (rad):", np.round(np.angle(Eint), 4))
    print("E (pu):", np.round(np.abs(Eint), 4))
    print("Pm (pu):", np.round(Pe, 4))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "ieee39_swing.json")
