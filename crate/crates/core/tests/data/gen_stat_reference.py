"""Writes stat_reference.json: test statistics and two-sided p-values
evaluated with mpmath at 60 significant digits.

    python3 gen_stat_reference.py > stat_reference.json
"""
import json
import random

import mpmath as mp

mp.mp.dps = 60


def normal_p(z):
    return mp.erfc(abs(z) / mp.sqrt(2))


def t_p(t, df):
    x = df / (df + t * t)
    return mp.betainc(df / 2, mp.mpf(1) / 2, 0, x, regularized=True)


def mean_var(xs):
    xs = [mp.mpf(x) for x in xs]
    n = len(xs)
    m = mp.fsum(xs) / n
    return m, mp.fsum((x - m) ** 2 for x in xs) / (n - 1)


def z_case(k1, n1, k2, n2):
    p = mp.mpf(k1 + k2) / (n1 + n2)
    se = mp.sqrt(p * (1 - p) * (mp.mpf(1) / n1 + mp.mpf(1) / n2))
    z = (mp.mpf(k1) / n1 - mp.mpf(k2) / n2) / se
    return {"kind": "z", "k1": k1, "n1": n1, "k2": k2, "n2": n2,
            "statistic": float(z), "p_value": float(normal_p(z))}


def welch_case(a, b):
    ma, va = mean_var(a)
    mb, vb = mean_var(b)
    sa, sb = va / len(a), vb / len(b)
    t = (ma - mb) / mp.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
    return {"kind": "welch", "a": a, "b": b, "statistic": float(t),
            "df": float(df), "p_value": float(t_p(t, df))}


def student_case(a, b):
    ma, va = mean_var(a)
    mb, vb = mean_var(b)
    na, nb = len(a), len(b)
    df = mp.mpf(na + nb - 2)
    sp = ((na - 1) * va + (nb - 1) * vb) / df
    t = (ma - mb) / mp.sqrt(sp * (mp.mpf(1) / na + mp.mpf(1) / nb))
    return {"kind": "student", "a": a, "b": b, "statistic": float(t),
            "df": float(df), "p_value": float(t_p(t, df))}


def pearson_case(x, y):
    X = [mp.mpf(v) for v in x]
    Y = [mp.mpf(v) for v in y]
    n = len(X)
    mx, my = mp.fsum(X) / n, mp.fsum(Y) / n
    sxy = mp.fsum((a - mx) * (b - my) for a, b in zip(X, Y))
    sxx = mp.fsum((a - mx) ** 2 for a in X)
    syy = mp.fsum((b - my) ** 2 for b in Y)
    r = sxy / mp.sqrt(sxx * syy)
    df = n - 2
    t = r * mp.sqrt(df / (1 - r * r))
    return {"kind": "pearson", "x": x, "y": y, "statistic": float(r),
            "df": float(df), "p_value": float(t_p(t, mp.mpf(df)))}


def main():
    rng = random.Random(20240601)
    cases = [z_case(30, 100, 20, 100), z_case(27, 557, 40, 538), z_case(9, 115, 60, 115)]
    while len(cases) < 15:
        n1, n2 = rng.randint(20, 3000), rng.randint(20, 3000)
        k1, k2 = rng.randint(1, n1 - 1), rng.randint(1, n2 - 1)
        cases.append(z_case(k1, n1, k2, n2))
    cases.append(welch_case([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]))
    while len(cases) < 30:
        na, nb = rng.randint(2, 40), rng.randint(2, 40)
        scale = rng.choice([1, 10, 400])
        a = [float(int(rng.expovariate(1 / scale))) for _ in range(na)]
        b = [round(rng.gauss(scale, scale / 3), 2) for _ in range(nb)]
        if len(set(a)) == 1:
            a[0] += 1.0
        cases.append(welch_case(a, b))
    while len(cases) < 40:
        na, nb = rng.randint(2, 30), rng.randint(2, 30)
        a = [round(rng.gauss(5, 2), 2) for _ in range(na)]
        b = [round(rng.gauss(6, 3), 2) for _ in range(nb)]
        cases.append(student_case(a, b))
    while len(cases) < 50:
        n = rng.randint(3, 40)
        x = [round(rng.uniform(0, 100), 2) for _ in range(n)]
        slope = rng.uniform(-1, 1)
        y = [round(slope * v + rng.gauss(0, 20), 2) for v in x]
        cases.append(pearson_case(x, y))
    print(json.dumps(cases, indent=1))


if __name__ == "__main__":
    main()
