# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: conic-box projection, tangency defects, voxel IoU.

Contracts match quadricfit._kernels.fallback; see there for documentation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef double _CORNER_TOL = 1e-12


def boxes_from_duals(double fx, double fy, double cx, double cy,
                     cnp.ndarray[double, ndim=2] rt,
                     cnp.ndarray[double, ndim=3] duals):
    cdef Py_ssize_t n = duals.shape[0]
    cdef cnp.ndarray[double, ndim=2] boxes = np.empty((n, 4))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.ones(n, dtype=np.uint8)
    cdef cnp.ndarray[double, ndim=2] m = np.empty((3, 4))
    cdef Py_ssize_t i, r, c, a, b
    cdef double z, corner, scale, v, g00, g11, g02, g12, g22, du, dv, ru, rv

    # m = K @ rt
    for c in range(4):
        m[0, c] = fx * rt[0, c] + cx * rt[2, c]
        m[1, c] = fy * rt[1, c] + cy * rt[2, c]
        m[2, c] = rt[2, c]

    cdef double[3][4] mq
    for i in range(n):
        # center depth: rt[2,:3] @ (-duals[i,:3,3]) + rt[2,3]
        z = rt[2, 3]
        for a in range(3):
            z -= rt[2, a] * duals[i, a, 3]
        if z <= 0.0:
            ok[i] = 0
            boxes[i, 0] = boxes[i, 1] = boxes[i, 2] = boxes[i, 3] = 0.0
            continue
        # mq = m @ duals[i]
        for r in range(3):
            for c in range(4):
                v = 0.0
                for a in range(4):
                    v += m[r, a] * duals[i, a, c]
                mq[r][c] = v
        # needed entries of g = mq @ m.T
        g00 = 0.0
        g11 = 0.0
        g02 = 0.0
        g12 = 0.0
        g22 = 0.0
        for a in range(4):
            g00 += mq[0][a] * m[0, a]
            g11 += mq[1][a] * m[1, a]
            g02 += mq[0][a] * m[2, a]
            g12 += mq[1][a] * m[2, a]
            g22 += mq[2][a] * m[2, a]
        corner = g22
        scale = fabs(g00)
        if fabs(g11) > scale:
            scale = fabs(g11)
        if fabs(g02) > scale:
            scale = fabs(g02)
        if fabs(g12) > scale:
            scale = fabs(g12)
        if fabs(g22) > scale:
            scale = fabs(g22)
        if scale < 1.0:
            scale = 1.0
        if fabs(corner) <= _CORNER_TOL * scale:
            ok[i] = 0
            boxes[i, 0] = boxes[i, 1] = boxes[i, 2] = boxes[i, 3] = 0.0
            continue
        g00 /= corner
        g11 /= corner
        g02 /= corner
        g12 /= corner
        du = g02 * g02 - g00
        dv = g12 * g12 - g11
        if du < 0.0 or dv < 0.0:
            ok[i] = 0
            boxes[i, 0] = boxes[i, 1] = boxes[i, 2] = boxes[i, 3] = 0.0
            continue
        ru = sqrt(du)
        rv = sqrt(dv)
        boxes[i, 0] = g02 - ru
        boxes[i, 1] = g02 + ru
        boxes[i, 2] = g12 - rv
        boxes[i, 3] = g12 + rv
    return boxes, ok.view(np.bool_)


def tangency_values(cnp.ndarray[double, ndim=2] planes,
                    cnp.ndarray[double, ndim=3] duals):
    cdef Py_ssize_t n = duals.shape[0]
    cdef Py_ssize_t np_ = planes.shape[0]
    cdef cnp.ndarray[double, ndim=2] vals = np.empty((n, np_))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.ones(n, dtype=np.uint8)
    cdef Py_ssize_t i, p, a, b
    cdef double acc, qp

    for i in range(n):
        for p in range(np_):
            acc = 0.0
            for a in range(4):
                qp = 0.0
                for b in range(4):
                    qp += duals[i, a, b] * planes[p, b]
                acc += planes[p, a] * qp
            vals[i, p] = acc
    return vals, ok.view(np.bool_)


def voxel_box_overlap(cnp.ndarray[double, ndim=2] rot_a,
                      cnp.ndarray[double, ndim=1] cen_a,
                      cnp.ndarray[double, ndim=1] half_a,
                      cnp.ndarray[double, ndim=2] rot_b,
                      cnp.ndarray[double, ndim=1] cen_b,
                      cnp.ndarray[double, ndim=1] half_b,
                      cnp.ndarray[double, ndim=1] lo,
                      cnp.ndarray[double, ndim=1] hi,
                      int n):
    cdef long count_a = 0, count_b = 0, count_both = 0
    cdef double sx = (hi[0] - lo[0]) / n
    cdef double sy = (hi[1] - lo[1]) / n
    cdef double sz = (hi[2] - lo[2]) / n
    cdef double px, py, pz, dx, dy, dz, u0, u1, u2
    cdef bint in_a, in_b
    cdef Py_ssize_t i, j, k

    for i in range(n):
        px = lo[0] + (i + 0.5) * sx
        for j in range(n):
            py = lo[1] + (j + 0.5) * sy
            for k in range(n):
                pz = lo[2] + (k + 0.5) * sz

                dx = px - cen_a[0]
                dy = py - cen_a[1]
                dz = pz - cen_a[2]
                u0 = dx * rot_a[0, 0] + dy * rot_a[1, 0] + dz * rot_a[2, 0]
                u1 = dx * rot_a[0, 1] + dy * rot_a[1, 1] + dz * rot_a[2, 1]
                u2 = dx * rot_a[0, 2] + dy * rot_a[1, 2] + dz * rot_a[2, 2]
                in_a = (fabs(u0) <= half_a[0] and fabs(u1) <= half_a[1]
                        and fabs(u2) <= half_a[2])

                dx = px - cen_b[0]
                dy = py - cen_b[1]
                dz = pz - cen_b[2]
                u0 = dx * rot_b[0, 0] + dy * rot_b[1, 0] + dz * rot_b[2, 0]
                u1 = dx * rot_b[0, 1] + dy * rot_b[1, 1] + dz * rot_b[2, 1]
                u2 = dx * rot_b[0, 2] + dy * rot_b[1, 2] + dz * rot_b[2, 2]
                in_b = (fabs(u0) <= half_b[0] and fabs(u1) <= half_b[1]
                        and fabs(u2) <= half_b[2])

                if in_a:
                    count_a += 1
                if in_b:
                    count_b += 1
                if in_a and in_b:
                    count_both += 1
    return count_a, count_b, count_both
