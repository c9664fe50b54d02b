"""Deterministic planar lander kernel.

A rigid body with orientation falls under gravity onto a flat pad at y = 0.
A linear policy picks one of four discrete actions each step (noop, left
orientation engine, main engine, right orientation engine). Horizontal wind
force and turbulence torque follow a deterministic periodic generator.

The kernel is compiled with numba; batch evaluation loops over the same
per-episode function, so a genome evaluated alone or inside a batch gives
bitwise-identical results.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# indices into the parameter vector passed to the kernel
P_DT, P_GRAVITY, P_MAIN_ACC, P_SIDE_ACC, P_SIDE_ANG_ACC, P_MASS, P_INERTIA = range(7)
P_LEG_DX, P_LEG_DY, P_BODY_R, P_HALF_WIDTH, P_Y_SCALE = range(7, 12)
P_LAND_VY, P_LAND_VX, P_LAND_ANGLE, P_MAX_STEPS, P_WIND_ON = range(12, 17)
N_PARAMS = 17

# outcome codes
LANDED, CRASHED, OUT_OF_BOUNDS, STEP_CAP, DIVERGED = range(5)

VX_SCALE = 0.2
VY_SCALE = 2.0 / 15.0
OMEGA_SCALE = 0.4


@njit(cache=True)
def _wind_profile(k):
    return math.tanh(math.sin(0.02 * k) + math.sin(math.pi * 0.01 * k))


@njit(cache=True)
def _shaping(xn, yn, vxn, vyn, angle, left, right):
    return (-100.0 * math.sqrt(xn * xn + yn * yn)
            - 100.0 * math.sqrt(vxn * vxn + vyn * vyn)
            - 100.0 * abs(angle) + 10.0 * left + 10.0 * right)


@njit(cache=True)
def _lowest_point(x, y, a, leg_dx, leg_dy, body_r):
    ca = math.cos(a)
    sa = math.sin(a)
    left_y = y + (-leg_dx) * sa + leg_dy * ca
    right_y = y + leg_dx * sa + leg_dy * ca
    return min(left_y, right_y, y - body_r)


@njit(cache=True)
def simulate_episode(theta, params, init, sigma_w, sigma_tau, wind_k0, torque_k0):
    """Run one episode; returns (objective, impact_x, impact_vy, steps, outcome)."""
    dt = params[P_DT]
    g = params[P_GRAVITY]
    main_acc = params[P_MAIN_ACC]
    side_acc = params[P_SIDE_ACC]
    side_ang = params[P_SIDE_ANG_ACC]
    mass = params[P_MASS]
    inertia = params[P_INERTIA]
    leg_dx = params[P_LEG_DX]
    leg_dy = params[P_LEG_DY]
    body_r = params[P_BODY_R]
    half_w = params[P_HALF_WIDTH]
    y_scale = params[P_Y_SCALE]
    max_steps = int(params[P_MAX_STEPS])
    wind_on = params[P_WIND_ON] > 0.5

    x = init[0]
    y = init[1]
    vx = init[2]
    vy = init[3]
    a = init[4]
    w = init[5]

    s = np.zeros(8)
    prev = _shaping(x / half_w, y / y_scale, vx * VX_SCALE, vy * VY_SCALE, a, 0.0, 0.0)
    total = 0.0
    outcome = STEP_CAP
    steps = 0
    left = 0.0
    right = 0.0
    for step in range(max_steps):
        steps = step + 1
        s[0] = x / half_w
        s[1] = y / y_scale
        s[2] = vx * VX_SCALE
        s[3] = vy * VY_SCALE
        s[4] = a
        s[5] = w * OMEGA_SCALE
        s[6] = 0.0
        s[7] = 0.0
        best = 0
        best_score = -np.inf
        for act in range(4):
            score = 0.0
            for j in range(8):
                score += theta[j * 4 + act] * s[j]
            if score > best_score:
                best_score = score
                best = act

        ax = 0.0
        ay = g
        alpha = 0.0
        fuel = 0.0
        ca = math.cos(a)
        sa = math.sin(a)
        if best == 2:
            ax += -sa * main_acc
            ay += ca * main_acc
            fuel = 0.3
        elif best == 1:
            ax += ca * side_acc
            ay += sa * side_acc
            alpha -= side_ang
            fuel = 0.03
        elif best == 3:
            ax -= ca * side_acc
            ay -= sa * side_acc
            alpha += side_ang
            fuel = 0.03
        if wind_on:
            ax += _wind_profile(wind_k0 + step) * sigma_w / mass
            alpha += _wind_profile(torque_k0 + step) * sigma_tau / inertia

        px, py, pvx, pvy, pa = x, y, vx, vy, a
        # semi-implicit Euler
        vx += ax * dt
        vy += ay * dt
        w += alpha * dt
        x += vx * dt
        y += vy * dt
        a += w * dt

        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(vx)
                and math.isfinite(vy) and math.isfinite(a) and math.isfinite(w)):
            return np.nan, np.nan, np.nan, steps, DIVERGED

        low = _lowest_point(x, y, a, leg_dx, leg_dy, body_r)
        if low <= 0.0:
            # interpolate the touchdown instant inside the step so impact
            # values vary continuously with the environment parameters
            low_prev = _lowest_point(px, py, pa, leg_dx, leg_dy, body_r)
            f = 1.0
            if low_prev > 0.0:
                f = low_prev / (low_prev - low)
            x = px + f * (x - px)
            y = py + f * (y - py)
            vx = pvx + f * (vx - pvx)
            vy = pvy + f * (vy - pvy)
            a = pa + f * (a - pa)
            fuel *= f

        ca = math.cos(a)
        sa = math.sin(a)
        left_y = y + (-leg_dx) * sa + leg_dy * ca
        right_y = y + leg_dx * sa + leg_dy * ca
        body_hit = y - body_r <= 1e-12
        left = 1.0 if left_y <= 1e-12 else 0.0
        right = 1.0 if right_y <= 1e-12 else 0.0

        shaping = _shaping(x / half_w, y / y_scale, vx * VX_SCALE, vy * VY_SCALE, a, left, right)
        total += shaping - prev - fuel
        prev = shaping

        if abs(x / half_w) >= 1.0:
            total -= 100.0
            outcome = OUT_OF_BOUNDS
            break
        if low <= 0.0:
            soft = (vy > -params[P_LAND_VY] and abs(vx) < params[P_LAND_VX]
                    and abs(a) < params[P_LAND_ANGLE] and not body_hit)
            if soft:
                total += 100.0
                outcome = LANDED
            else:
                total -= 100.0
                outcome = CRASHED
            break
    return total, x / half_w, vy * VY_SCALE, steps, outcome


@njit(cache=True)
def simulate_batch(thetas, params, init, sigma_w, sigma_tau, wind_k0, torque_k0):
    n = thetas.shape[0]
    out = np.empty((n, 3))
    codes = np.empty(n, dtype=np.int64)
    for i in range(n):
        obj, bx, bvy, _, code = simulate_episode(thetas[i], params, init, sigma_w, sigma_tau,
                                                 wind_k0, torque_k0)
        out[i, 0] = obj
        out[i, 1] = bx
        out[i, 2] = bvy
        codes[i] = code
    return out, codes
