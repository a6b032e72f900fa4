# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pixel kernels.

Mirrors kernels._numpy operation for operation; every floating-point
expression keeps the same operand order so results stay bit-identical
between lanes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor
from libc.string cimport memset


def edge_map(const unsigned char[:, ::1] img, int threshold):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef int v, d, m
    for y in range(h):
        for x in range(w):
            v = img[y, x]
            m = 0
            if x > 0:
                d = v - img[y, x - 1]
                if d < 0:
                    d = -d
                if d > m:
                    m = d
            if x + 1 < w:
                d = v - img[y, x + 1]
                if d < 0:
                    d = -d
                if d > m:
                    m = d
            if y > 0:
                d = v - img[y - 1, x]
                if d < 0:
                    d = -d
                if d > m:
                    m = d
            if y + 1 < h:
                d = v - img[y + 1, x]
                if d < 0:
                    d = -d
                if d > m:
                    m = d
            out[y, x] = m >= threshold
    return out_arr.view(bool)


def box_mask(int height, int width, const double[:, ::1] boxes):
    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t n = boxes.shape[0]
    cdef Py_ssize_t i, px, py
    cdef Py_ssize_t x_lo, x_hi, y_lo, y_hi
    cdef double x0, y0, x1, y1, cx, cy
    for i in range(n):
        x0 = boxes[i, 0]
        y0 = boxes[i, 1]
        x1 = boxes[i, 2]
        y1 = boxes[i, 3]
        # pixel centers are monotone, so the covered indices form one span
        x_lo, x_hi = width, -1
        for px in range(width):
            cx = (px + 0.5) / width
            if cx >= x0 and cx < x1:
                if px < x_lo:
                    x_lo = px
                x_hi = px
        y_lo, y_hi = height, -1
        for py in range(height):
            cy = (py + 0.5) / height
            if cy >= y0 and cy < y1:
                if py < y_lo:
                    y_lo = py
                y_hi = py
        if x_hi < 0 or y_hi < 0:
            continue
        for py in range(y_lo, y_hi + 1):
            memset(&out[py, x_lo], 1, x_hi - x_lo + 1)
    return out_arr.view(bool)


def equal_outside(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b,
                  mask_arr):
    cdef const unsigned char[:, ::1] mask = mask_arr.view(np.uint8)
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef Py_ssize_t y, x
    cdef int bad
    for y in range(h):
        bad = 0
        for x in range(w):
            bad |= (mask[y, x] == 0) & (a[y, x] != b[y, x])
        if bad:
            return False
    return True


def blend_min(unsigned char[:, ::1] dst, const unsigned char[:, ::1] patch,
              int top, int left):
    cdef Py_ssize_t ph = patch.shape[0]
    cdef Py_ssize_t pw = patch.shape[1]
    cdef Py_ssize_t y, x
    cdef unsigned char p, d
    for y in range(ph):
        for x in range(pw):
            p = patch[y, x]
            d = dst[top + y, left + x]
            dst[top + y, left + x] = p if p < d else d


def luminance(const unsigned char[:, :, ::1] rgb):
    cdef Py_ssize_t h = rgb.shape[0]
    cdef Py_ssize_t w = rgb.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef double r, g, b
    for y in range(h):
        for x in range(w):
            r = rgb[y, x, 0]
            g = rgb[y, x, 1]
            b = rgb[y, x, 2]
            out[y, x] = <unsigned char> floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return out_arr


def mask_iou(a_arr, b_arr):
    cdef const unsigned char[:, ::1] a = a_arr.view(np.uint8)
    cdef const unsigned char[:, ::1] b = b_arr.view(np.uint8)
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef Py_ssize_t y, x
    cdef long inter = 0
    cdef long uni = 0
    for y in range(h):
        for x in range(w):
            inter += a[y, x] & b[y, x]
            uni += a[y, x] | b[y, x]
    if uni == 0:
        return 1.0
    return inter / <double> uni
