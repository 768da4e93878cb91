"""Rotation utilities on SO(3): hat map, exp/log, quaternions, right Jacobian.

Convention used throughout the package: a rotation matrix ``R`` rotates
body-frame vectors into the world frame (``v_world = R @ v_body``), so ``R.T``
takes world vectors into the body frame.  This is the convention the IMU
measurement model in :mod:`biasplan.imu` relies on.
"""

from __future__ import annotations

import numpy as np

# Below this angle (rad) closed-form Rodrigues coefficients switch to their
# Taylor expansions to avoid 0/0.
SMALL_ANGLE = 1e-8

# Orthonormality slack accepted by validating helpers. Long products of
# rotations accumulate roundoff well below this.
_ORTHO_TOL = 1e-6


def skew(v):
    """Skew-symmetric (hat) matrix of ``v``, so that ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def so3_exp(phi):
    """Rotation matrix for a rotation vector, via the Rodrigues formula.

    Parameters
    ----------
    phi : ndarray, shape (3,)
        Rotation vector (axis times angle, rad).

    Returns
    -------
    ndarray, shape (3, 3)
    """
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < SMALL_ANGLE:
        a = 1.0 - angle * angle / 6.0
        b = 0.5 - angle * angle / 24.0
    else:
        a = np.sin(angle) / angle
        b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * K + b * (K @ K)


def is_rotation(R, tol=_ORTHO_TOL):
    """True if ``R`` is orthonormal with determinant +1 within ``tol``."""
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    if not np.all(np.isfinite(R)):
        return False
    err = np.abs(R.T @ R - np.eye(3)).max()
    return err <= tol and np.linalg.det(R) > 0.0


def rotmat_to_quat(R):
    """Unit quaternion (w, x, y, z) of a rotation matrix, w >= 0.

    Uses Shepperd's method: the largest of the four squared components is
    computed first, which keeps the extraction stable for any rotation angle.
    """
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    q = np.empty(4)
    if t > R[0, 0] and t > R[1, 1] and t > R[2, 2]:
        s = np.sqrt(1.0 + t) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_rotmat(q):
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def so3_log(R):
    """Rotation vector of ``R`` with norm <= pi.

    Goes through the quaternion extraction, which is stable for angles near
    pi.  At exactly pi the axis sign is ambiguous (R(pi, a) == R(pi, -a));
    the representative whose largest-magnitude component is non-negative is
    returned.

    Raises
    ------
    ValueError
        If ``R`` is not a rotation matrix (orthonormal, det +1).
    """
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise ValueError("so3_log: input is not a rotation matrix")
    w, x, y, z = rotmat_to_quat(R)
    vec = np.array([x, y, z])
    vn = float(np.linalg.norm(vec))
    if vn < SMALL_ANGLE:
        # angle ~ 0: phi = 2 v / w to first order
        return 2.0 * vec / w
    angle = 2.0 * np.arctan2(vn, w)  # w >= 0 so angle in [0, pi]
    phi = (angle / vn) * vec
    if angle > np.pi - 1e-9:
        i = int(np.argmax(np.abs(phi)))
        if phi[i] < 0.0:
            phi = -phi
    return phi


def so3_right_jacobian(phi):
    """Right Jacobian J_r of SO(3): so3_exp(phi + d) ~ so3_exp(phi) @ so3_exp(J_r(phi) @ d)."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < SMALL_ANGLE:
        a = 0.5 - angle * angle / 24.0
        b = 1.0 / 6.0 - angle * angle / 120.0
    else:
        a = (1.0 - np.cos(angle)) / (angle * angle)
        b = (angle - np.sin(angle)) / (angle ** 3)
    return np.eye(3) - a * K + b * (K @ K)


def project_to_so3(R):
    """Nearest rotation matrix (Frobenius) via the polar factor of ``R``."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def random_rotation(rng):
    """Rotation matrix drawn uniformly from SO(3).

    Shoemake's subgroup-algorithm construction: three uniforms map to a
    uniform unit quaternion, which is converted to a matrix.
    """
    u1, u2, u3 = rng.random(3)
    a = np.sqrt(1.0 - u1)
    b = np.sqrt(u1)
    q = np.array([
        a * np.sin(2.0 * np.pi * u2),
        a * np.cos(2.0 * np.pi * u2),
        b * np.sin(2.0 * np.pi * u3),
        b * np.cos(2.0 * np.pi * u3),
    ])
    # any quaternion sign maps to the same rotation
    return quat_to_rotmat(q)
