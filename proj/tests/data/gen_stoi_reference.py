"""Reference STOI values from pystoi for test_metrics.

Signals come from a 64-bit LCG that the C++ test reimplements. The 16 kHz
cases are resampled with scipy using the same 321-tap Kaiser(8) filter and
then scored by pystoi at 10 kHz.

    python3 gen_stoi_reference.py > stoi_reference.csv
"""
import numpy as np
from pystoi import stoi
from scipy.signal import firwin, resample_poly

MASK = (1 << 64) - 1


def lcg_noise(seed, n):
    s = seed
    out = np.empty(n)
    for i in range(n):
        s = (s * 6364136223846793005 + 1442695040888963407) & MASK
        out[i] = (s >> 11) * 2.0**-53 * 2.0 - 1.0
    return out


def test_signal(case, fs):
    n = int(2.5 * fs)
    t = np.arange(n) / fs
    f0 = 110.0 + 20.0 * case
    env = np.maximum(0.0, np.sin(2 * np.pi * (2.0 + 0.5 * case) * t)) ** 2
    x = sum(np.sin(2 * np.pi * k * f0 * t) / k for k in range(1, 6)) * env
    noise = lcg_noise(1000 + case, n)
    snr_db = 5.0 - 4.0 * case
    y = x + noise * np.sqrt(np.mean(x**2) / np.mean(noise**2) / 10 ** (snr_db / 10))
    return x, y


h = firwin(321, 1 / 8, window=("kaiser", 8.0))
print("case,fs,stoi")
for fs in (10000, 16000):
    for case in range(4):
        x, y = test_signal(case, fs)
        if fs == 16000:
            x = resample_poly(x, 5, 8, window=h)
            y = resample_poly(y, 5, 8, window=h)
        print(f"{case},{fs},{stoi(x, y, 10000):.15f}")
