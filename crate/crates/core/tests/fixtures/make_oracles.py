"""Independent numpy reader/writer for the .cfk format.

Reads the Rust-generated fixtures, recomputes reference values, and writes
tensors with its own encoder for the cross-implementation parse test.
Run from this directory: python3 make_oracles.py
"""

import json

import numpy as np

DTYPES = {"c64": np.complex64, "c128": np.complex128, "u8": np.uint8}


def read_cfk(name):
    with open(name + ".json") as f:
        h = json.load(f)
    assert h["format_version"] == 1 and h["endian"] == "little"
    assert h["order"] == "col-major kx,ky,kz,coil,t"
    raw = np.fromfile(name, dtype=np.dtype(DTYPES[h["dtype"]]).newbyteorder("<"))
    return raw.reshape(h["dims"], order="F")


def write_cfk(name, arr, dtype):
    header = {
        "format_version": 1,
        "dims": list(arr.shape),
        "dtype": dtype,
        "order": "col-major kx,ky,kz,coil,t",
        "endian": "little",
    }
    with open(name + ".json", "w") as f:
        json.dump(header, f, indent=2)
        f.write("\n")
    np.asarray(arr, dtype=np.dtype(DTYPES[dtype]).newbyteorder("<")).ravel(order="F").tofile(name)


def ssos(d, t=0):
    img = np.fft.fftshift(
        np.fft.ifftn(np.fft.ifftshift(d[..., t], axes=(0, 1, 2)), axes=(0, 1, 2), norm="ortho"),
        axes=(0, 1, 2),
    )
    return np.sqrt(np.sum(np.abs(img) ** 2, axis=3))


full = read_cfk("phantom32.cfk")
zf = read_cfk("zerofill32_r4.cfk")
mask = read_cfk("mask64_r4.cfk")

snr = 20 * np.log10(np.linalg.norm(full) / np.linalg.norm(zf - full))

r, x = ssos(full), ssos(zf)
px = np.round(np.clip(10 * np.abs(x - r) / r.max(), 0, 1) * 65535).astype(int)
# x fastest within a row, rows along y
pixels = px[:, :, 0].ravel(order="F").tolist()

with open("oracles.json", "w") as f:
    json.dump(
        {
            "zerofill32_r4_snr_db": float(snr),
            "mask64_r4_observed": int(mask.sum()),
            "errmap32_r4_x10_pixels": pixels,
        },
        f,
    )
    f.write("\n")

n = 3 * 2 * 2 * 2 * 3
i = np.arange(n)
vals = (0.25 * i - 3.0) + 1j * ((-1.0) ** i / (i + 1.0))
write_cfk("py_c128.cfk", vals.reshape((3, 2, 2, 2, 3), order="F"), "c128")
write_cfk("py_c64.cfk", vals.reshape((3, 2, 2, 2, 3), order="F"), "c64")
write_cfk("py_mask.cfk", (i % 3 == 0).astype(np.uint8).reshape((3, 2, 2, 2, 3), order="F"), "u8")
print(f"zero-filled SNR {snr:.6f} dB, mask observed {int(mask.sum())}")
