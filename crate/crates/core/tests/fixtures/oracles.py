"""Independent high-precision reference values for the Rust tests.

Run from this directory: python3 oracles.py
"""
import json
from mpmath import mp, mpf, erfc, exp, sqrt, pi, cos, sin

mp.dps = 40

H = mpf("6.62607015e-34")
HBAR = H / (2 * pi)
QE = mpf("1.602176634e-19")


def dropout(t, tau, sigma):
    return mpf(1) / 2 * exp((sigma**2 - 2 * tau * t) / (2 * tau**2)) * erfc((sigma**2 - tau * t) / (sqrt(2) * sigma * tau))


def dispersion(ec_hz, ej_hz):
    ec = 2 * pi * ec_hz
    xi = mpf(ej_hz) / ec_hz
    h = xi / 2
    return 16 * sqrt(2 / pi) * ec * h ** mpf("0.75") * exp(-sqrt(8 * xi)) * (16 * sqrt(h) + 1)


def theta(n, grad, cos_eta, ec_hz, w01, cs):
    return 2 * sqrt(n) * cs * grad * sqrt(H * ec_hz / (HBAR * w01**3)) * cos_eta


def main():
    tau, sigma = mpf("130e-6"), mpf("210e-6")
    rows = []
    for k in range(-40, 121):
        t = mpf(k) * mpf("25e-6")
        rows.append((float(t), float(dropout(t, tau, sigma))))
    for t in ["-2e-3", "4e-3", "6e-3"]:
        rows.append((float(mpf(t)), float(dropout(mpf(t), tau, sigma))))
    with open("dropout_curve.csv", "w") as f:
        f.write("t,p1\n")
        for t, p in rows:
            f.write(f"{t!r},{p!r}\n")

    w01 = 2 * pi * mpf("5e9")
    disp = dispersion(mpf("250e6"), mpf("12.5e9"))
    vals = {
        "dispersion_rad_s": float(disp),
        "dispersion_hz": float(disp / (2 * pi)),
        "eps_phi_dq1": float(disp**2 * mpf("1e-6") ** 2 / 3 * sin(pi / 2) ** 2),
        "theta_n1e4_grad1e3": float(theta(mpf(10) ** 4, mpf(1000), 1, mpf("250e6"), w01, mpf(6000))),
        "sensing_area_um2": float(pi * mpf("11.7") * 70 * mpf("90.5")),
        "phonon_dwell_s": float(mpf("6.25e-3") ** 2 / (mpf("0.2") * 6000 * mpf("375e-6"))),
        "delta_gamma_xqp1e-6": float(mpf("1e-6") / pi * sqrt(2 * mpf("190e-6") * QE * 2 * pi * mpf("4.5e9") / HBAR)),
        "p_ab_table_row": float((mpf("0.027") - mpf("0.055") * mpf("0.061")) / (1 + mpf("0.027") - mpf("0.055") - mpf("0.061"))),
        "p_corr_table_row": float(2 * mpf("0.026") / (mpf("0.055") + mpf("0.061"))),
        "rate_0p055_per_44s": float(mpf("0.055") / 44),
    }
    with open("scalars.json", "w") as f:
        json.dump(vals, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
