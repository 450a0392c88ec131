#!/usr/bin/env python3
"""Writes the MRC2014 fixtures used by test_io.

Pattern: section z, row y, column x holds z * 100 + y * 10 + x + 0.5 for
float32 files and z * 100 - y * 10 - x for int16 files.
"""
import pathlib
import struct

import numpy as np

NX, NY, NZ = 5, 3, 4
PIXEL = 1.949
HERE = pathlib.Path(__file__).resolve().parent


def header(mode, nx, ny, nz, endian, stamp, ext=0):
    h = bytearray(1024)
    struct.pack_into(endian + "3i", h, 0, nx, ny, nz)
    struct.pack_into(endian + "i", h, 12, mode)
    struct.pack_into(endian + "3i", h, 28, nx, ny, nz)  # MX, MY, MZ
    struct.pack_into(endian + "3f", h, 40, nx * PIXEL, ny * PIXEL, nz * PIXEL)
    struct.pack_into(endian + "3i", h, 64, 1, 2, 3)  # MAPC, MAPR, MAPS
    struct.pack_into(endian + "i", h, 92, ext)
    h[104:108] = b"MRCO"
    struct.pack_into(endian + "i", h, 108, 20140)
    h[208:212] = b"MAP "
    h[212:216] = stamp
    return bytes(h)


def pattern(dtype):
    z, y, x = np.meshgrid(np.arange(NZ), np.arange(NY), np.arange(NX), indexing="ij")
    if dtype == "f4":
        return (z * 100 + y * 10 + x + 0.5).astype(np.float32)
    return (z * 100 - y * 10 - x).astype(np.int16)


def write(name, data):
    (HERE / name).write_bytes(data)


LE, BE = b"\x44\x44\x00\x00", b"\x11\x11\x00\x00"
f32 = pattern("f4")
i16 = pattern("i2")
write("mode2_le.mrc", header(2, NX, NY, NZ, "<", LE) + f32.astype("<f4").tobytes())
write("mode2_be.mrc", header(2, NX, NY, NZ, ">", BE) + f32.astype(">f4").tobytes())
write("mode1_le.mrc", header(1, NX, NY, NZ, "<", LE) + i16.astype("<i2").tobytes())
write("mode2_ext.mrc", header(2, NX, NY, NZ, "<", LE, ext=64) + bytes(range(64)) + f32.astype("<f4").tobytes())
write("mode0.mrc", header(0, NX, NY, NZ, "<", LE) + bytes(NX * NY * NZ))
write("truncated.mrc", (header(2, NX, NY, NZ, "<", LE) + f32.astype("<f4").tobytes())[:-7])
write("bad_stamp.mrc", header(2, NX, NY, NZ, "<", b"\x12\x34\x00\x00") + f32.astype("<f4").tobytes())
write("mode2_2d.mrc", header(2, NX, 1, NZ, "<", LE) + f32[:, :1, :].astype("<f4").tobytes())
