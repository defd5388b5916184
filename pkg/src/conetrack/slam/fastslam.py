"""Rao-Blackwellised particle-filter SLAM over range-bearing cone landmarks.

Particles are stored column-wise in a :class:`ParticleSet` so every filter
stage is vectorised across the particle dimension. Per-particle landmark maps
live in fixed-capacity slot arrays; a landmark id is its slot index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Cone, ConeColor, ConeObservation, Pose2D, wrap_angles

VERBATIM = "verbatim"
CONVENTIONAL = "conventional"
FASTSLAM1 = "fastslam1"
FASTSLAM2 = "fastslam2"

NEW_LANDMARK = -1

COLORS = list(ConeColor)
_UNKNOWN_CODE = COLORS.index(ConeColor.UNKNOWN)


@dataclass(frozen=True)
class OdometryInput:
    v: float
    omega: float
    dt: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("odometry dt must be > 0")


@dataclass
class SlamConfig:
    n_particles: int = 100
    sigma_v: float = 0.1          # m/s
    sigma_omega: float = 0.02     # rad/s
    sigma_range: float = 0.1      # m
    sigma_bearing: float = 0.01   # rad
    gate: float = 9.21            # chi-square 99%, 2 dof
    new_landmark_threshold: float = 9.21
    resample_fraction: float = 0.5
    always_resample: bool = False
    proposal: str = FASTSLAM1
    motion_model: str = VERBATIM
    prune_after: int = 10
    search_radius: float = 3.0    # Euclidean prefilter before the Mahalanobis test
    loop_radius: float = 2.0
    loop_min_length: float = 20.0
    graph_optimization: bool = True

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        for name in ("sigma_v", "sigma_omega", "sigma_range", "sigma_bearing", "gate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SlamConfig.{name} must be > 0")
        if self.new_landmark_threshold < self.gate:
            raise ValueError("new_landmark_threshold must be >= gate")
        if self.proposal not in (FASTSLAM1, FASTSLAM2):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.motion_model not in (VERBATIM, CONVENTIONAL):
            raise ValueError(f"unknown motion model {self.motion_model!r}")

    @property
    def measurement_cov(self) -> np.ndarray:
        return np.diag([self.sigma_range ** 2, self.sigma_bearing ** 2])


@dataclass(frozen=True)
class LandmarkEstimate:
    mean: np.ndarray
    covariance: np.ndarray
    color: ConeColor = ConeColor.UNKNOWN
    hit_count: int = 1


@dataclass
class Particle:
    pose: Pose2D
    weight: float
    landmarks: dict[int, LandmarkEstimate] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# motion model


def step_increments(v, omega, dt, model=VERBATIM):
    """Convert rates to the per-step (displacement, half-turn) pair of the motion residual.

    With the verbatim model the heading advances by ``2 * omega * dt``; the
    conventional model advances it by ``omega * dt`` and moves along the mid-step chord.
    """
    d = np.asarray(v) * dt
    w = np.asarray(omega) * dt
    if model == CONVENTIONAL:
        w = 0.5 * w
    return d, w


def motion_model(poses, v, omega, dt, model=VERBATIM) -> np.ndarray:
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    d, w = step_increments(v, omega, dt, model)
    phi = poses[:, 2] + w
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + d * np.cos(phi)
    out[:, 1] = poses[:, 1] + d * np.sin(phi)
    out[:, 2] = wrap_angles(poses[:, 2] + 2.0 * w)
    return out


def odometry_between(prev: Pose2D, curr: Pose2D, dt: float, model=VERBATIM) -> OdometryInput:
    """The (v, omega) that moves ``prev`` exactly onto ``curr`` under ``model``."""
    chord = math.hypot(curr.x - prev.x, curr.y - prev.y)
    dtheta = float(wrap_angles(curr.theta - prev.theta))
    half = 0.5 * dtheta
    if chord > 1e-12:
        heading = math.atan2(curr.y - prev.y, curr.x - prev.x)
        if abs(float(wrap_angles(heading - prev.theta - half))) > 0.5 * math.pi:
            chord = -chord
    omega = half / dt if model == VERBATIM else dtheta / dt
    return OdometryInput(chord / dt, omega, dt)


def _motion_jacobian(poses, u: OdometryInput, model) -> np.ndarray:
    k = 1.0 if model == VERBATIM else 0.5
    d, w = step_increments(u.v, u.omega, u.dt, model)
    phi = poses[:, 2] + w
    G = np.zeros((len(poses), 3, 2))
    G[:, 0, 0] = u.dt * np.cos(phi)
    G[:, 1, 0] = u.dt * np.sin(phi)
    G[:, 0, 1] = -d * np.sin(phi) * k * u.dt
    G[:, 1, 1] = d * np.cos(phi) * k * u.dt
    G[:, 2, 1] = 2.0 * k * u.dt
    return G


# ---------------------------------------------------------------------------
# measurement model


def expected_measurement(poses, lm):
    """Range/bearing of landmarks ``lm`` (K,2) from ``poses`` (K,3), plus the Jacobians.

    Returns ``(zhat, H_landmark, H_pose)`` with shapes (K,2), (K,2,2), (K,2,3).
    """
    dx = lm[:, 0] - poses[:, 0]
    dy = lm[:, 1] - poses[:, 1]
    q = np.maximum(dx * dx + dy * dy, 1e-12)
    r = np.sqrt(q)
    zhat = np.column_stack([r, wrap_angles(np.arctan2(dy, dx) - poses[:, 2])])
    Hm = np.empty((len(dx), 2, 2))
    Hm[:, 0, 0] = dx / r
    Hm[:, 0, 1] = dy / r
    Hm[:, 1, 0] = -dy / q
    Hm[:, 1, 1] = dx / q
    Hx = np.zeros((len(dx), 2, 3))
    Hx[:, :, :2] = -Hm
    Hx[:, 1, 2] = -1.0
    return zhat, Hm, Hx


def _innovation(z, zhat):
    nu = z - zhat
    nu[..., 1] = wrap_angles(nu[..., 1])
    return nu


def _logsumexp(a) -> float:
    m = float(np.max(a))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(a - m))))


def _det2(S):
    return S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]


def _inv2(S):
    """Closed-form inverse of a stack of 2x2 matrices."""
    det = _det2(S)
    out = np.empty_like(S)
    out[:, 0, 0] = S[:, 1, 1] / det
    out[:, 1, 1] = S[:, 0, 0] / det
    out[:, 0, 1] = -S[:, 0, 1] / det
    out[:, 1, 0] = -S[:, 1, 0] / det
    return out


def _gauss_loglik(nu, S):
    Sinv = _inv2(S)
    m = np.einsum("ki,kij,kj->k", nu, Sinv, nu)
    return -0.5 * m - 0.5 * np.log((2 * np.pi) ** 2 * _det2(S)), m


def _mT(a):
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------------------
# particle storage


class ParticleSet:
    """Column-wise particle storage; filter stages mutate it in place."""

    def __init__(self, n: int, pose: Pose2D, capacity: int = 64):
        self.poses = np.tile(pose.as_array(), (n, 1))
        self.log_w = np.full(n, -math.log(n))
        self.mean = np.zeros((n, capacity, 2))
        self.cov = np.tile(np.eye(2), (n, capacity, 1, 1))
        self.hits = np.zeros((n, capacity), dtype=np.int64)
        self.color = np.full((n, capacity), _UNKNOWN_CODE, dtype=np.int64)
        self.born = np.zeros((n, capacity), dtype=np.int64)
        self.active = np.zeros((n, capacity), dtype=bool)
        self.count = np.zeros(n, dtype=np.int64)
        self.updates = 0
        self.degenerate = False
        self.prior_mean: np.ndarray | None = None
        self.prior_cov: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w - _logsumexp(self.log_w))

    @property
    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w * w))

    @property
    def used(self) -> int:
        return int(self.count.max(initial=0))

    def _ensure_capacity(self, needed: int) -> None:
        cap = self.mean.shape[1]
        if needed <= cap:
            return
        new = max(needed, 2 * cap)
        n = len(self)
        grow = new - cap
        self.mean = np.concatenate([self.mean, np.zeros((n, grow, 2))], axis=1)
        self.cov = np.concatenate([self.cov, np.tile(np.eye(2), (n, grow, 1, 1))], axis=1)
        self.hits = np.concatenate([self.hits, np.zeros((n, grow), dtype=np.int64)], axis=1)
        self.color = np.concatenate([self.color, np.full((n, grow), _UNKNOWN_CODE, dtype=np.int64)], axis=1)
        self.born = np.concatenate([self.born, np.zeros((n, grow), dtype=np.int64)], axis=1)
        self.active = np.concatenate([self.active, np.zeros((n, grow), dtype=bool)], axis=1)

    def take(self, idx) -> None:
        """Replace the set with the particles at ``idx`` (copying their maps)."""
        idx = np.asarray(idx)
        self.poses = self.poses[idx].copy()
        self.log_w = np.full(len(idx), -math.log(len(idx)))
        for name in ("mean", "cov", "hits", "color", "born", "active", "count"):
            setattr(self, name, getattr(self, name)[idx].copy())
        if self.prior_mean is not None:
            self.prior_mean = self.prior_mean[idx].copy()
            self.prior_cov = self.prior_cov[idx].copy()

    def particle(self, i: int) -> Particle:
        w = self.weights
        lms = {}
        for j in np.flatnonzero(self.active[i]):
            lms[int(j)] = LandmarkEstimate(self.mean[i, j].copy(), self.cov[i, j].copy(),
                                           COLORS[self.color[i, j]], int(self.hits[i, j]))
        return Particle(Pose2D.from_array(self.poses[i]), float(w[i]), lms)

    @classmethod
    def from_particles(cls, particles: list[Particle]) -> "ParticleSet":
        n = len(particles)
        cap = max([max(p.landmarks, default=-1) + 1 for p in particles] + [1])
        ps = cls(n, Pose2D(0, 0, 0), capacity=cap)
        w = np.array([p.weight for p in particles], dtype=float)
        with np.errstate(divide="ignore"):
            ps.log_w = np.log(w / w.sum()) if w.sum() > 0 else np.full(n, -math.log(n))
        for i, p in enumerate(particles):
            ps.poses[i] = p.pose.as_array()
            for j, lm in p.landmarks.items():
                ps.mean[i, j] = lm.mean
                ps.cov[i, j] = lm.covariance
                ps.hits[i, j] = lm.hit_count
                ps.color[i, j] = COLORS.index(lm.color)
                ps.active[i, j] = True
            ps.count[i] = max(p.landmarks, default=-1) + 1
        return ps

    def landmarks_of(self, i: int) -> tuple[np.ndarray, np.ndarray, list[ConeColor]]:
        j = np.flatnonzero(self.active[i])
        return j, self.mean[i, j].copy(), [COLORS[c] for c in self.color[i, j]]


# ---------------------------------------------------------------------------
# filter stages


def predict(particles: ParticleSet, u: OdometryInput, cfg: SlamConfig, rng=None) -> ParticleSet:
    """Propagate every particle through the motion model; ``rng=None`` means noise-free."""
    n = len(particles)
    mean = motion_model(particles.poses, u.v, u.omega, u.dt, cfg.motion_model)
    if rng is None:
        sampled = mean
    else:
        v = u.v + rng.normal(0.0, cfg.sigma_v, n)
        w = u.omega + rng.normal(0.0, cfg.sigma_omega, n)
        sampled = motion_model(particles.poses, v, w, u.dt, cfg.motion_model)
    G = _motion_jacobian(particles.poses, u, cfg.motion_model)
    Su = np.diag([cfg.sigma_v ** 2, cfg.sigma_omega ** 2])
    particles.prior_cov = G @ Su @ _mT(G) + 1e-9 * np.eye(3)
    particles.prior_mean = mean
    particles.poses = sampled
    return particles


def _hsh(H, S):
    """H @ S @ H^T for stacks of 2x2 matrices, written out."""
    a = H[:, 0, 0] * S[:, 0, 0] + H[:, 0, 1] * S[:, 1, 0]
    b = H[:, 0, 0] * S[:, 0, 1] + H[:, 0, 1] * S[:, 1, 1]
    c = H[:, 1, 0] * S[:, 0, 0] + H[:, 1, 1] * S[:, 1, 0]
    d = H[:, 1, 0] * S[:, 0, 1] + H[:, 1, 1] * S[:, 1, 1]
    out = np.empty_like(S)
    out[:, 0, 0] = a * H[:, 0, 0] + b * H[:, 0, 1]
    out[:, 0, 1] = a * H[:, 1, 0] + b * H[:, 1, 1]
    out[:, 1, 0] = c * H[:, 0, 0] + d * H[:, 0, 1]
    out[:, 1, 1] = c * H[:, 1, 0] + d * H[:, 1, 1]
    return out


def _candidates(particles: ParticleSet, z: ConeObservation, cfg: SlamConfig, rows=None, extras=False):
    """Mahalanobis distances of ``z`` to nearby colour-compatible landmarks.

    Returns flat arrays (particle index, landmark id, d^2); with ``extras`` also
    the innovation, landmark Jacobian and innovation covariance per candidate.
    """
    m = particles.used
    if rows is None:
        rows = np.arange(len(particles))
    if m == 0 or len(rows) == 0:
        empty = (np.zeros(0, int), np.zeros(0, int), np.zeros(0))
        return empty + (np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros((0, 2, 2))) if extras else empty
    poses = particles.poses[rows]
    phi = poses[:, 2] + z.bearing
    ox = poses[:, 0] + z.range * np.cos(phi)
    oy = poses[:, 1] + z.range * np.sin(phi)
    mean = particles.mean[rows, :m]
    near = particles.active[rows, :m] & (
        (mean[..., 0] - ox[:, None]) ** 2 + (mean[..., 1] - oy[:, None]) ** 2 < cfg.search_radius ** 2)
    if z.color is not ConeColor.UNKNOWN:
        code = COLORS.index(z.color)
        c = particles.color[rows, :m]
        near &= (c == _UNKNOWN_CODE) | (c == code)
    pr, li = np.nonzero(near)
    if len(pr) == 0:
        return _candidates(particles, z, cfg, rows[:0], extras)
    pi = rows[pr]
    zhat, Hm, _ = expected_measurement(particles.poses[pi], particles.mean[pi, li])
    S = _hsh(Hm, particles.cov[pi, li]) + cfg.measurement_cov
    nu = _innovation(np.array([z.range, z.bearing]), zhat)
    Sinv = _inv2(S)
    d2 = (nu[:, 0] * (Sinv[:, 0, 0] * nu[:, 0] + Sinv[:, 0, 1] * nu[:, 1])
          + nu[:, 1] * (Sinv[:, 1, 0] * nu[:, 0] + Sinv[:, 1, 1] * nu[:, 1]))
    if extras:
        return pi, li, d2, nu, Hm, S
    return pi, li, d2


def _pick(n, pi, li, d2, gate, with_index=False):
    """Per particle, the lowest-d^2 landmark within ``gate`` (ties: lowest id).

    With ``with_index`` also returns, per particle, the position of the chosen
    candidate in the input arrays (-1 when none).
    """
    ids = np.full(n, NEW_LANDMARK)
    best = np.full(n, np.inf)
    sel = np.full(n, -1)
    ok = np.flatnonzero(d2 <= gate)
    if len(ok):
        order = ok[np.lexsort((li[ok], d2[ok], pi[ok]))]
        p = pi[order]
        first = np.concatenate([[True], p[1:] != p[:-1]])
        chosen = order[first]
        ids[pi[chosen]] = li[chosen]
        best[pi[chosen]] = d2[chosen]
        sel[pi[chosen]] = chosen
    return (ids, best, sel) if with_index else (ids, best)


def associate(particle: Particle, z: ConeObservation, cfg: SlamConfig) -> int:
    """Maximum-likelihood data association for one particle: landmark id or NEW_LANDMARK."""
    if not particle.landmarks:
        return NEW_LANDMARK
    ps = ParticleSet.from_particles([Particle(particle.pose, 1.0, particle.landmarks)])
    pi, li, d2 = _candidates(ps, z, cfg)
    ids, _ = _pick(1, pi, li, d2, cfg.gate)
    return int(ids[0])


def _new_landmark_loglik(cfg: SlamConfig) -> float:
    # density at the gate boundary for a freshly initialised landmark (S = 2Q)
    S = 2.0 * cfg.measurement_cov
    return -0.5 * cfg.new_landmark_threshold - 0.5 * math.log((2 * math.pi) ** 2 * np.linalg.det(S))


def update(particles: ParticleSet, observations, cfg: SlamConfig, rng=None) -> ParticleSet:
    """Associate, update landmark EKFs, reweight and renormalise.

    In FastSLAM 2.0 mode each matched observation first refines the particle
    pose with a pose-space EKF step (sampling the refined proposal with a
    perturbed measurement) before its landmark is updated.
    """
    n = len(particles)
    Q = cfg.measurement_cov
    fs2 = cfg.proposal == FASTSLAM2 and particles.prior_mean is not None
    if fs2:
        mu = particles.prior_mean.copy()
        P = particles.prior_cov.copy()
    log_new = _new_landmark_loglik(cfg)
    all_rows = np.arange(n)
    for z in observations:
        zv = np.array([z.range, z.bearing])
        pi, li, d2, nu_c, Hm_c, S_c = _candidates(particles, z, cfg, extras=True)
        ids, best, sel = _pick(n, pi, li, d2, cfg.gate, with_index=True)
        matched = np.flatnonzero(ids >= 0)
        if len(matched):
            j = ids[matched]
            lm = particles.mean[matched, j]
            Sm = particles.cov[matched, j]
            if fs2:
                xs = particles.poses[matched]
                zhat, Hm, Hx = expected_measurement(xs, lm)
                Qj = _hsh(Hm, Sm) + Q
                Pm = P[matched]
                L = Hx @ Pm @ _mT(Hx) + Qj
                zmu, _, _ = expected_measurement(mu[matched], lm)
                nu_mu = _innovation(zv[None, :], zmu)
                ll, _ = _gauss_loglik(nu_mu, L)
                K = Pm @ _mT(Hx) @ _inv2(L)
                mu[matched] += np.einsum("kij,kj->ki", K, nu_mu)
                mu[matched, 2] = wrap_angles(mu[matched, 2])
                if rng is not None:
                    Lq = np.linalg.cholesky(Qj)
                    eta = np.einsum("kij,kj->ki", Lq, rng.standard_normal((len(matched), 2)))
                else:
                    eta = np.zeros((len(matched), 2))
                nu_s = _innovation(zv[None, :] + eta, zhat)
                xs = xs + np.einsum("kij,kj->ki", K, nu_s)
                xs[:, 2] = wrap_angles(xs[:, 2])
                particles.poses[matched] = xs
                P[matched] = (np.eye(3) - K @ Hx) @ Pm
                particles.log_w[matched] += ll
            if fs2:
                zhat, Hm, _ = expected_measurement(particles.poses[matched], lm)
                S = _hsh(Hm, Sm) + Q
                nu = _innovation(zv[None, :], zhat)
            else:
                c = sel[matched]
                nu, Hm, S = nu_c[c], Hm_c[c], S_c[c]
            Sinv = _inv2(S)
            if not fs2:
                ll, _ = _gauss_loglik(nu, S)
                particles.log_w[matched] += ll
            K = Sm @ _mT(Hm) @ Sinv
            particles.mean[matched, j] = lm + np.einsum("kij,kj->ki", K, nu)
            IKH = np.eye(2) - K @ Hm
            C = _hsh(IKH, Sm) + _hsh(K, np.broadcast_to(Q, Sm.shape))
            particles.cov[matched, j] = 0.5 * (C + _mT(C))
            particles.hits[matched, j] += 1
            if z.color is not ConeColor.UNKNOWN:
                particles.color[matched, j] = COLORS.index(z.color)
        fresh = all_rows[ids < 0]
        if cfg.new_landmark_threshold > cfg.gate and len(fresh):
            # observations inside the ambiguity band neither match nor spawn
            pf, lf, d2f = _candidates(particles, z, cfg, rows=fresh)
            _, bf = _pick(n, pf, lf, d2f, cfg.new_landmark_threshold)
            fresh = fresh[~np.isfinite(bf[fresh])]
        if len(fresh):
            slot = particles.count[fresh]
            particles._ensure_capacity(int(slot.max()) + 1)
            p = particles.poses[fresh]
            phi = p[:, 2] + z.bearing
            c, s = np.cos(phi), np.sin(phi)
            J = np.empty((len(fresh), 2, 2))
            J[:, 0, 0], J[:, 0, 1] = c, -z.range * s
            J[:, 1, 0], J[:, 1, 1] = s, z.range * c
            particles.mean[fresh, slot] = p[:, :2] + z.range * np.column_stack([c, s])
            C = _hsh(J, np.broadcast_to(Q, J.shape))
            particles.cov[fresh, slot] = 0.5 * (C + _mT(C))
            particles.hits[fresh, slot] = 1
            particles.born[fresh, slot] = particles.updates
            particles.color[fresh, slot] = COLORS.index(z.color)
            particles.active[fresh, slot] = True
            particles.count[fresh] += 1
            particles.log_w[fresh] += log_new
    if fs2:
        particles.prior_mean = mu
        particles.prior_cov = P
    particles.updates += 1
    stale = particles.active & (particles.hits == 1) & (particles.updates - particles.born > cfg.prune_after)
    particles.active &= ~stale
    _normalise(particles)
    return particles


def _normalise(particles: ParticleSet) -> None:
    lw = particles.log_w
    finite = np.isfinite(lw)
    if not finite.any():
        particles.log_w = np.full(len(lw), -math.log(len(lw)))
        particles.degenerate = True
        return
    particles.degenerate = False
    particles.log_w = lw - _logsumexp(lw[finite])
    particles.log_w[~finite] = -np.inf


def systematic_indices(weights, u: float) -> np.ndarray:
    """Low-variance resampling: indices selected by the comb ``(u + k) / n``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    positions = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def resample(particles: ParticleSet, cfg: SlamConfig, rng) -> ParticleSet:
    """Systematic resampling when ESS drops below ``resample_fraction * n`` (or always)."""
    n = len(particles)
    if not cfg.always_resample and particles.ess >= cfg.resample_fraction * n:
        return particles
    particles.take(systematic_indices(particles.weights, rng.random()))
    return particles


def best_index(particles: ParticleSet) -> int:
    return int(np.argmax(particles.log_w))


def best_estimate(particles: ParticleSet) -> tuple[Pose2D, list[Cone]]:
    """Pose and landmark map of the highest-weight particle (ties: lowest index)."""
    i = best_index(particles)
    _, means, colors = particles.landmarks_of(i)
    return Pose2D.from_array(particles.poses[i]), [Cone(float(m[0]), float(m[1]), c)
                                                   for m, c in zip(means, colors)]
