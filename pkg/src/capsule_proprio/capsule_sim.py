"""Synthetic strain-gauge readings for a spherical joint capsule.

The capsule is a thin shell on a sphere centred at the origin.  The bone axis
is +x: latitude is measured from the equatorial plane (x = 0) towards +x, and
longitude is measured about x starting from +z towards +y, so a surface point
is ``R * (sin(lat), cos(lat) sin(lon), cos(lat) cos(lon))``.

The membrane is held by two rings: a fixed ring on the stationary side and a
moving ring on the moving bone.  A membrane point at normalised fraction ``u``
between them follows the pose's rigid motion scaled by ``u``: the rotation is
taken ``u`` of the way along the shortest arc from identity, the translation is
scaled linearly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
import numpy as np
from scipy.spatial.transform import Rotation

from . import _rng
from .errors import ConfigError, DomainError

N_BOARDS = 4
SENSORS_PER_BOARD = 15
N_SENSORS = N_BOARDS * SENSORS_PER_BOARD

ADC_MAX = 628
V_MAX = 3.3

POSE_FIELDS = ("x", "y", "z", "roll", "pitch", "yaw")
ROLL_LIMIT = 45.0
PITCH_LIMIT = 90.0
YAW_LIMIT = 90.0
TRANSLATION_LIMIT = 0.012

# Start/end offsets of the tracked pose over a full recording (m, m, m, deg, deg, deg).
REFERENCE_DRIFT = (0.001, 0.002, 0.004, 0.203, 1.082, 1.053)


@dataclass(frozen=True)
class Pose:
    """6-DOF joint state: translation in metres, rotation in degrees.

    Rotation angles compose as intrinsic Z-Y-X (yaw about z, then pitch about
    the new y, then roll about the new x).
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise DomainError(f"non-finite pose {self}")

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def rotation(self):
        return pose_rotations(self.as_array()[None, :])[0]


def pose_rotations(poses):
    """Rotation objects for an (N, 6) pose array."""
    poses = np.asarray(poses, dtype=float)
    return Rotation.from_euler("ZYX", poses[:, [5, 4, 3]], degrees=True)


class Row(str, enum.Enum):
    MID_CAPSULAR = "mid_capsular"
    TRANSITIONAL = "transitional"
    BONE_ATTACHMENT = "bone_attachment"


ROWS = (Row.MID_CAPSULAR, Row.TRANSITIONAL, Row.BONE_ATTACHMENT)


@dataclass(frozen=True)
class SensorStatus:
    """Health of one channel: active, failed before recording, or failing at ``t``."""

    kind: str = "active"
    at: float | None = None

    @classmethod
    def active(cls):
        return cls("active")

    @classmethod
    def failed_at_start(cls):
        return cls("failed")

    @classmethod
    def disconnects_at(cls, t):
        return cls("disconnects", float(t))

    def is_failed(self, t):
        """Boolean (array) telling whether the channel reads the rail at time ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "active":
            return np.zeros(t.shape, dtype=bool)
        if self.kind == "failed":
            return np.ones(t.shape, dtype=bool)
        return t >= self.at


@dataclass(frozen=True)
class SensorSpec:
    board: int
    index: int
    row: Row
    center_longitude: float
    center_latitude: float
    gauge_axis: tuple
    gauge_length: float = 0.005
    status: SensorStatus = field(default_factory=SensorStatus.active)

    @property
    def label(self):
        return sensor_label(self.board, self.index)

    @property
    def sensor_id(self):
        return self.board * SENSORS_PER_BOARD + self.index


def sensor_label(board, index):
    return f"adc{board}_data{index}"


SENSOR_LABELS = tuple(sensor_label(b, j) for b in range(N_BOARDS) for j in range(SENSORS_PER_BOARD))

# Index j on every board sits in row j // 5 (see build_layout).
ROW_OF_LABEL = {
    sensor_label(b, j): ROWS[j // 5]
    for b in range(N_BOARDS)
    for j in range(SENSORS_PER_BOARD)
}


def surface_point(radius, latitude, longitude):
    """Cartesian point(s) on the sphere for latitude/longitude in degrees."""
    lat = np.radians(latitude)
    lon = np.radians(longitude)
    return radius * np.stack(
        [np.sin(lat), np.cos(lat) * np.sin(lon), np.cos(lat) * np.cos(lon)], axis=-1
    )


def latitude_of(points):
    points = np.asarray(points, dtype=float)
    norm = np.linalg.norm(points, axis=-1)
    return np.degrees(np.arcsin(np.clip(points[..., 0] / norm, -1.0, 1.0)))


def _tangent_frame(latitude, longitude):
    """Unit north (increasing latitude) and east (increasing longitude) vectors."""
    lat = np.radians(latitude)
    lon = np.radians(longitude)
    north = np.array([np.cos(lat), -np.sin(lat) * np.sin(lon), -np.sin(lat) * np.cos(lon)])
    east = np.array([0.0, np.cos(lon), -np.sin(lon)])
    return north, east


@dataclass(frozen=True)
class CapsuleGeometry:
    sphere_radius: float = 0.050
    capsule_thickness: float = 0.002
    fixed_ring_latitude: float = -60.0
    moving_ring_latitude: float = 75.0
    layout: tuple = ()

    def __post_init__(self):
        if self.sphere_radius <= 0 or self.capsule_thickness <= 0:
            raise ConfigError("sphere radius and capsule thickness must be positive")
        if not self.fixed_ring_latitude < self.moving_ring_latitude:
            raise ConfigError("fixed ring must lie below the moving ring")
        for s in self.layout:
            if not self.fixed_ring_latitude < s.center_latitude < self.moving_ring_latitude:
                raise ConfigError(f"{s.label} lies outside the ring span")

    def shell_volume(self):
        """Volume of a full spherical shell of the capsule thickness about the mid-surface radius."""
        r_out = self.sphere_radius + self.capsule_thickness / 2
        r_in = self.sphere_radius - self.capsule_thickness / 2
        return 4.0 / 3.0 * math.pi * (r_out**3 - r_in**3)

    def with_statuses(self, statuses):
        layout = tuple(replace(s, status=st) for s, st in zip(self.layout, statuses))
        return replace(self, layout=layout)

    @property
    def labels(self):
        return tuple(s.label for s in self.layout)


def build_layout(
    seed=0,
    jitter=True,
    radius=0.050,
    gauge_length=0.005,
    row_latitudes=(5.0, 30.0, 55.0),
    position_jitter=0.002,
    axis_jitter=10.0,
):
    """Place 60 gauges: 4 boards, each covering a 90 degree sector with 5 per row.

    Index ``j`` on a board sits in row ``j // 5``, so higher-numbered channels
    lie closer to the moving-bone attachment.  With ``jitter`` the centres are
    displaced by up to ``position_jitter`` metres and the axes turned by up to
    ``axis_jitter`` degrees from the meridian.
    """
    rng = np.random.default_rng(_rng.derive_seed(seed, 0x1A7))
    specs = []
    for board in range(N_BOARDS):
        for index in range(SENSORS_PER_BOARD):
            row, slot = divmod(index, 5)
            lat = row_latitudes[row]
            lon = board * 90.0 + (slot + 0.5) * 18.0 - 180.0
            alpha = 0.0
            if jitter:
                d_north, d_east = rng.uniform(-position_jitter, position_jitter, 2)
                lat += math.degrees(d_north / radius)
                lon += math.degrees(d_east / (radius * math.cos(math.radians(lat))))
                alpha = rng.uniform(-axis_jitter, axis_jitter)
            north, east = _tangent_frame(lat, lon)
            a = math.radians(alpha)
            axis = math.cos(a) * north + math.sin(a) * east
            axis /= np.linalg.norm(axis)
            specs.append(
                SensorSpec(
                    board=board,
                    index=index,
                    row=ROWS[row],
                    center_longitude=lon,
                    center_latitude=lat,
                    gauge_axis=tuple(float(v) for v in axis),
                    gauge_length=gauge_length,
                )
            )
    return tuple(specs)


def default_geometry(seed=0, jitter=True, **kwargs):
    radius = kwargs.pop("sphere_radius", 0.050)
    gauge_length = kwargs.pop("gauge_length", 0.005)
    layout = build_layout(seed=seed, jitter=jitter, radius=radius, gauge_length=gauge_length)
    return CapsuleGeometry(sphere_radius=radius, layout=layout, **kwargs)


def mirror_sensor(sensor):
    """Reflect a sensor through the x-z plane (longitude -> -longitude)."""
    ax = np.array(sensor.gauge_axis)
    ax[1] = -ax[1]
    return replace(sensor, center_longitude=-sensor.center_longitude, gauge_axis=tuple(ax))


def interpolation_fraction(geometry, latitude):
    """Normalised position ``u`` between the fixed (0) and moving (1) rings."""
    latitude = np.asarray(latitude, dtype=float)
    lo, hi = geometry.fixed_ring_latitude, geometry.moving_ring_latitude
    tol = 1e-9
    if np.any(latitude < lo - tol) or np.any(latitude > hi + tol):
        raise DomainError(f"latitude outside ring span [{lo}, {hi}]")
    return np.clip((latitude - lo) / (hi - lo), 0.0, 1.0)


def _deform(rotvecs, translations, points, u):
    """Apply the u-scaled rigid motion of each pose to each point.

    rotvecs, translations: (N, 3); points: (M, 3); u: (M,).  Returns (N, M, 3).
    """
    n, m = len(rotvecs), len(points)
    scaled = rotvecs[:, None, :] * u[None, :, None]
    rot = Rotation.from_rotvec(scaled.reshape(-1, 3))
    moved = rot.apply(np.broadcast_to(points, (n, m, 3)).reshape(-1, 3)).reshape(n, m, 3)
    return moved + translations[:, None, :] * u[None, :, None]


def _split_poses(poses):
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    return pose_rotations(poses).as_rotvec(), poses[:, :3]


def deform_point(geometry, pose, point):
    """Deformed location of an undeformed membrane point (metres)."""
    point = np.asarray(point, dtype=float)
    u = interpolation_fraction(geometry, latitude_of(point))
    pose_arr = pose.as_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=float)
    rotvecs, trans = _split_poses(pose_arr)
    return _deform(rotvecs, trans, point.reshape(1, 3), np.atleast_1d(u))[0, 0]


def gauge_endpoints(sensor, radius):
    """Endpoints half a gauge length either side of the centre along the surface."""
    center = surface_point(1.0, sensor.center_latitude, sensor.center_longitude)
    axis = np.asarray(sensor.gauge_axis, dtype=float)
    a = sensor.gauge_length / (2 * radius)
    minus = radius * (math.cos(a) * center - math.sin(a) * axis)
    plus = radius * (math.cos(a) * center + math.sin(a) * axis)
    return minus, plus


def strain_field(geometry, poses, sensors=None):
    """Strain of every gauge for every pose: returns (N, n_sensors)."""
    sensors = geometry.layout if sensors is None else sensors
    ends = np.array([gauge_endpoints(s, geometry.sphere_radius) for s in sensors])  # (S, 2, 3)
    points = ends.reshape(-1, 3)
    u = interpolation_fraction(geometry, latitude_of(points))
    rotvecs, trans = _split_poses(poses)
    moved = _deform(rotvecs, trans, points, u).reshape(len(rotvecs), len(sensors), 2, 3)
    rest = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=-1)
    length = np.linalg.norm(moved[:, :, 1] - moved[:, :, 0], axis=-1)
    return length / rest - 1.0


def gauge_strain(geometry, pose, sensor):
    """Dimensionless strain of one gauge (positive = stretch)."""
    pose_arr = pose.as_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=float)
    return float(strain_field(geometry, pose_arr[None, :], [sensor])[0, 0])


@dataclass(frozen=True)
class Readout:
    """Bridge/amplifier/ADC chain parameters."""

    rest_voltage: float = 1.65
    gain: float = 8.0
    noise_sigma: float = 0.01
    v_max: float = V_MAX


def _time_key(t):
    return np.rint(np.asarray(t, dtype=float) * 1e6).astype(np.int64)


def rail_voltage(sensor_id, noise_seed, v_max=V_MAX):
    """Rail a failed channel pins to (0 or v_max), fixed per sensor and seed."""
    h = _rng.hash_keys(noise_seed, sensor_id, 0x7A11)
    return np.where((h & np.uint64(1)) == 1, v_max, 0.0)


def channel_noise(sensor_id, t, noise_seed):
    return _rng.normal(noise_seed, sensor_id, _time_key(t))


def sensor_voltage(strain, sensor, t, noise_seed, readout=Readout(), clip=True):
    """Amplified bridge voltage of one channel.

    Failed channels read their rail plus noise.  ``clip=False`` returns the
    pre-clamp value.
    """
    strain = np.asarray(strain, dtype=float)
    t = np.asarray(t, dtype=float)
    eta = readout.noise_sigma * channel_noise(sensor.sensor_id, t, noise_seed) if readout.noise_sigma else 0.0
    v = readout.rest_voltage + readout.gain * strain + eta
    v = np.where(sensor.status.is_failed(t), rail_voltage(sensor.sensor_id, noise_seed, readout.v_max) + eta, v)
    if clip:
        v = np.clip(v, 0.0, readout.v_max)
    return v[()] if np.ndim(v) == 0 else v


def to_adc(voltage):
    """ADC count for a voltage in [0, 3.3]: 628 counts at 3.3 V."""
    v = np.asarray(voltage, dtype=float)
    if np.any(v < 0.0) or np.any(v > V_MAX) or not np.all(np.isfinite(v)):
        raise DomainError("voltage outside [0, 3.3] V; clamp before conversion")
    counts = np.clip(np.rint(v * ADC_MAX / V_MAX), 0, ADC_MAX).astype(np.int64)
    return int(counts) if counts.ndim == 0 else counts


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Segment:
    """One block of the motion plan.

    ``kind`` is ``"hold"`` (stay at neutral) or ``"sweep"`` (0 -> +A -> 0 -> -A -> 0
    along ``axis`` with raised-cosine ramps).  ``weight`` sets the share of
    samples; ``hold_fraction`` is the share of a sweep spent at the two peaks.
    """

    kind: str
    weight: float
    axis: str | None = None
    amplitude: float = 0.0
    hold_fraction: float = 0.0


DEFAULT_PLAN = (
    Segment("hold", 6),
    Segment("sweep", 510, "roll", ROLL_LIMIT, hold_fraction=0.216),
    Segment("sweep", 320, "pitch", PITCH_LIMIT, hold_fraction=0.0625),
    Segment("sweep", 320, "yaw", YAW_LIMIT, hold_fraction=0.0625),
    Segment("sweep", 100, "x", 0.010),
    Segment("hold", 7),
)


@dataclass(frozen=True)
class TrajectoryConfig:
    n_samples: int = 1263
    period: float = 0.1
    segments: tuple = DEFAULT_PLAN
    wander: bool = True
    wander_angle: float = 3.0
    wander_translation: float = 0.001


def _allocate(weights, n):
    weights = np.asarray(weights, dtype=float)
    k = len(weights)
    # every segment gets one sample, the rest is shared by weight (largest remainder)
    share = (n - k) * weights / weights.sum()
    base = np.floor(share).astype(int)
    rest = n - k - base.sum()
    order = np.argsort(-(share - base), kind="stable")
    base[order[:rest]] += 1
    return base + 1


def _raised_cosine(a, b, tau):
    return a + (b - a) * (1.0 - np.cos(np.pi * tau)) / 2.0


def _sweep_profile(s, amplitude, hold_fraction):
    """Value of a 0 -> +A -> 0 -> -A -> 0 sweep at normalised times ``s`` in [0, 1)."""
    ramp = (1.0 - hold_fraction) / 4.0
    hold = hold_fraction / 2.0
    knots = np.cumsum([0.0, ramp, hold, ramp, ramp, hold, ramp])
    levels = [(0, amplitude), (amplitude, amplitude), (amplitude, 0), (0, -amplitude), (-amplitude, -amplitude), (-amplitude, 0)]
    out = np.zeros_like(s)
    for i, (a, b) in enumerate(levels):
        lo, hi = knots[i], knots[i + 1]
        mask = (s >= lo) & (s < hi) if i < 5 else (s >= lo)
        if hi > lo:
            out[mask] = _raised_cosine(a, b, np.clip((s[mask] - lo) / (hi - lo), 0.0, 1.0))
        else:
            out[mask] = b
    return out


def generate_trajectory(config=TrajectoryConfig(), seed=0):
    """Sample times (N,) and poses (N, 6) for a segmented slow-motion recording."""
    n = int(config.n_samples)
    segments = tuple(config.segments)
    if not segments:
        raise ConfigError("motion plan has no segments")
    if n < len(segments):
        raise ConfigError(f"{n} samples cannot cover {len(segments)} segments")
    if config.period <= 0:
        raise ConfigError("sample period must be positive")
    counts = _allocate([s.weight for s in segments], n)
    poses = np.zeros((n, 6))
    start = 0
    for seg, count in zip(segments, counts):
        if seg.kind == "sweep":
            if seg.axis not in POSE_FIELDS:
                raise ConfigError(f"unknown sweep axis {seg.axis!r}")
            s = np.arange(count) / count
            poses[start : start + count, POSE_FIELDS.index(seg.axis)] = _sweep_profile(
                s, seg.amplitude, seg.hold_fraction
            )
        elif seg.kind != "hold":
            raise ConfigError(f"unknown segment kind {seg.kind!r}")
        start += count

    t = np.arange(n) * config.period
    if config.wander and n > 1:
        rng = np.random.default_rng(_rng.derive_seed(seed, 0x3A9D))
        duration = n * config.period
        taper = np.sin(np.pi * t / duration) ** 2
        amps = [config.wander_translation] * 3 + [config.wander_angle] * 3
        amps[0] *= 0.5
        for axis, amp in enumerate(amps):
            freqs = rng.uniform(0.01, 0.05, 3)
            phases = rng.uniform(0, 2 * np.pi, 3)
            w = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0) / 3.0
            poses[:, axis] += amp * taper * w
    return t, clip_to_rom(poses)


def clip_to_rom(poses):
    poses = np.array(poses, dtype=float)
    poses[:, 3] = np.clip(poses[:, 3], -ROLL_LIMIT, ROLL_LIMIT)
    poses[:, 4] = np.clip(poses[:, 4], -PITCH_LIMIT, PITCH_LIMIT)
    poses[:, 5] = np.clip(poses[:, 5], -YAW_LIMIT, YAW_LIMIT)
    norm = np.linalg.norm(poses[:, :3], axis=1)
    over = norm > TRANSLATION_LIMIT
    poses[over, :3] *= (TRANSLATION_LIMIT / norm[over])[:, None]
    return poses


# ---------------------------------------------------------------------------
# failures, drift and the full simulation


@dataclass(frozen=True)
class FailurePlan:
    """Which channels are dead.

    ``n_failed`` channels, drawn by seed, fail before the recording starts;
    ``disconnects`` lists ``(label, t)`` pairs for channels lost mid-run.
    """

    n_failed: int = 20
    disconnects: tuple = ()

    def statuses(self, labels, seed):
        labels = list(labels)
        if not 0 <= self.n_failed <= len(labels):
            raise ConfigError(f"cannot fail {self.n_failed} of {len(labels)} sensors")
        rng = np.random.default_rng(_rng.derive_seed(seed, 0xFA11))
        failed = set(rng.choice(len(labels), size=self.n_failed, replace=False).tolist())
        out = [SensorStatus.failed_at_start() if i in failed else SensorStatus.active() for i in range(len(labels))]
        for label, t in self.disconnects:
            if label not in labels:
                raise ConfigError(f"unknown sensor {label!r} in disconnect plan")
            i = labels.index(label)
            if out[i].kind == "active":
                out[i] = SensorStatus.disconnects_at(t)
        return out


@dataclass(frozen=True)
class DriftModel:
    enabled: bool = False
    final_offset: tuple = REFERENCE_DRIFT

    def offsets(self, t):
        """Per-sample additive offset (N, 6), linear in time, full offset at the last sample."""
        t = np.asarray(t, dtype=float)
        if not self.enabled or len(t) == 0:
            return np.zeros((len(t), 6))
        span = t[-1] - t[0]
        frac = (t - t[0]) / span if span > 0 else np.ones_like(t)
        frac[-1] = 1.0
        return frac[:, None] * np.asarray(self.final_offset, dtype=float)[None, :]


@dataclass(frozen=True)
class SensorFrame:
    t: float
    counts: tuple


@dataclass
class SimulationResult:
    t: np.ndarray
    counts: np.ndarray  # (N, 60) int
    poses: np.ndarray  # recorded pose (ground truth plus drift), (N, 6)
    true_poses: np.ndarray
    geometry: CapsuleGeometry
    drift: np.ndarray

    def frames(self):
        return [SensorFrame(float(t), tuple(int(c) for c in row)) for t, row in zip(self.t, self.counts)]

    @property
    def final_offset(self):
        return tuple(float(v) for v in self.drift[-1]) if len(self.drift) else ()


def simulate(geometry, trajectory, failure_plan=FailurePlan(), drift_model=DriftModel(), seed=0, readout=Readout()):
    """Run the capsule through ``trajectory`` = (t, poses) and digitise every channel."""
    t, poses = trajectory
    t = np.asarray(t, dtype=float)
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != 6 or len(poses) != len(t):
        raise ConfigError("trajectory must be (t[N], poses[N, 6])")
    statuses = failure_plan.statuses(geometry.labels, seed)
    geometry = geometry.with_statuses(statuses)
    strains = strain_field(geometry, poses) if len(t) else np.zeros((0, len(geometry.layout)))
    volts = np.empty_like(strains)
    for j, sensor in enumerate(geometry.layout):
        volts[:, j] = sensor_voltage(strains[:, j], sensor, t, seed, readout)
    counts = to_adc(volts) if len(t) else np.zeros((0, len(geometry.layout)), dtype=np.int64)
    drift = drift_model.offsets(t)
    return SimulationResult(
        t=t,
        counts=np.asarray(counts, dtype=np.int64).reshape(len(t), -1),
        poses=poses + drift,
        true_poses=poses,
        geometry=geometry,
        drift=drift,
    )
