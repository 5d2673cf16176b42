#include "magsig/fieldsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "magsig/sigproc.hpp"
#include "json.hpp"

namespace magsig::fieldsim {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kSingularityRadius_m = 1.0e-3;

double splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return static_cast<double>(z ^ (z >> 31));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  return s;
}

double quantize_clip(double v, const SensorSpec& sensor) {
  if (sensor.resolution_ut > 0.0)
    v = std::round(v / sensor.resolution_ut) * sensor.resolution_ut;
  return std::clamp(v, -sensor.range_ut, sensor.range_ut);
}

// Per-segment field series split into clutter and structure contributions,
// both already rotated into the device frame.
struct RawSegment {
  std::vector<Vec3> clutter, structure;
  std::vector<double> pitch_deg, roll_deg;
  std::vector<PassEvent> events;  // span times local to the segment
  double duration_s = 0.0;
};

RawSegment simulate_raw(const WalkSpec& walk, const Superstructure* structure,
                        const ClutterSpec& clutter, const SensorSpec& sensor,
                        std::uint64_t seed) {
  if (walk.pace_mps <= 0.0 || walk.lateral_distance_m <= 0.0 ||
      walk.duration_s <= 0.0)
    throw std::invalid_argument("fieldsim: invalid WalkSpec");
  if (sensor.sample_rate_hz <= 0.0 || sensor.resolution_ut < 0.0)
    throw std::invalid_argument("fieldsim: invalid SensorSpec");
  if (clutter.noise_std_ut < 0.0)
    throw std::invalid_argument("fieldsim: invalid ClutterSpec");

  Vec3 axis = Vec3::UnitX();
  Vec3 row_origin = Vec3::Zero();
  if (structure != nullptr && !structure->units.empty()) {
    axis = structure->row_axis.normalized();
    row_origin = structure->units.front().position_m;
  }
  if (std::abs(axis.z()) > 0.99)
    throw std::invalid_argument("fieldsim: row_axis must be near-horizontal");
  Vec3 perp = Vec3::UnitZ().cross(axis).normalized();

  const std::size_t n =
      static_cast<std::size_t>(std::llround(walk.duration_s * sensor.sample_rate_hz));
  const double dt = 1.0 / sensor.sample_rate_hz;

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);

  RawSegment out;
  out.duration_s = walk.duration_s;
  out.clutter.resize(n);
  out.structure.assign(n, Vec3::Zero());
  out.pitch_deg.assign(n, walk.pitch_deg);
  out.roll_deg.assign(n, walk.roll_deg);

  const double drift_step = clutter.drift_scale_ut / std::sqrt(sensor.sample_rate_hz);
  Vec3 drift = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i * dt;
    const double along = walk.pace_mps * t - walk.start_offset_m;
    Vec3 pos = row_origin + along * axis + walk.lateral_distance_m * perp;
    pos.z() = walk.sensor_height_m;

    Vec3 world = clutter.earth_field_ut;
    for (const auto& d : clutter.static_dipoles) world += dipole_field_ut(pos, d);
    for (int a = 0; a < 3; ++a)
      drift[a] += gauss(rng) * drift_step;
    world += drift;
    world += Vec3(gauss(rng), gauss(rng), gauss(rng)) * clutter.noise_std_ut;
    out.clutter[i] = rotate_world_to_device(world, walk.heading_azimuth_deg,
                                            walk.pitch_deg, walk.roll_deg);

    if (structure != nullptr && !structure->units.empty()) {
      Vec3 fs = Vec3::Zero();
      for (const auto& u : structure->units) fs += dipole_field_ut(pos, u);
      out.structure[i] = rotate_world_to_device(fs, walk.heading_azimuth_deg,
                                                walk.pitch_deg, walk.roll_deg);
    }
  }

  if (structure != nullptr && !structure->units.empty()) {
    // The pass span covers the row extent plus half a unit spacing on each
    // side, the region where the walker is effectively alongside the row.
    const double row_len = structure->row_length_m();
    const double margin = 0.5 * structure->unit_spacing_m;
    const double t_begin = (walk.start_offset_m - margin) / walk.pace_mps;
    const double t_end = (walk.start_offset_m + row_len + margin) / walk.pace_mps;
    const double t_ca = (walk.start_offset_m + row_len / 2.0) / walk.pace_mps;
    if (t_end > 0.0 && t_begin < walk.duration_s) {
      PassEvent ev;
      ev.structure_id = structure->permutation_id;
      ev.closest_approach_s = t_ca;
      ev.span_begin_s = std::max(0.0, t_begin);
      ev.span_end_s = std::min(walk.duration_s, t_end);
      out.events.push_back(ev);
    }
  }
  return out;
}

Recording assemble(const RawSegment& raw, double structure_gain,
                   const SensorSpec& sensor, std::uint64_t seed) {
  Recording rec;
  rec.sample_rate_hz = sensor.sample_rate_hz;
  rec.seed = seed;
  const std::size_t n = raw.clutter.size();
  rec.t_s.resize(n);
  rec.bx_ut.resize(n);
  rec.by_ut.resize(n);
  rec.bz_ut.resize(n);
  rec.pitch_deg = raw.pitch_deg;
  rec.roll_deg = raw.roll_deg;
  const double dt = 1.0 / sensor.sample_rate_hz;
  for (std::size_t i = 0; i < n; ++i) {
    rec.t_s[i] = i * dt;
    const Vec3 b = raw.clutter[i] + structure_gain * raw.structure[i];
    rec.bx_ut[i] = quantize_clip(b.x(), sensor);
    rec.by_ut[i] = quantize_clip(b.y(), sensor);
    rec.bz_ut[i] = quantize_clip(b.z(), sensor);
  }
  rec.pass_events = raw.events;
  return rec;
}

// Fixed-point iteration on the measured SIR; the measured value of the
// assembled (quantized) recording must land within +-1 dB of the target.
Recording assemble_with_target(const RawSegment& raw, double target_db,
                               const SensorSpec& sensor, std::uint64_t seed) {
  double gain = 1.0;
  Recording rec = assemble(raw, gain, sensor, seed);
  for (int iter = 0; iter < 6; ++iter) {
    const double measured = sigproc::measure_sir_db(rec);
    if (std::abs(measured - target_db) < 0.25) break;
    gain *= std::pow(10.0, (target_db - measured) / 20.0);
    rec = assemble(raw, gain, sensor, seed);
  }
  return rec;
}

}  // namespace

ClutterSpec ClutterSpec::shielded() {
  ClutterSpec c;
  c.earth_field_ut = Vec3(20.0, 0.0, -40.0);
  c.static_dipoles.clear();
  c.noise_std_ut = 0.3;
  c.drift_scale_ut = 0.0;
  c.target_sir_db.reset();
  return c;
}

Vec3 dipole_field_ut(const Vec3& sensor_pos_m, const DipoleSource& source) {
  const Vec3 r = sensor_pos_m - source.position_m;
  const double rn = r.norm();
  if (rn < kSingularityRadius_m)
    throw std::domain_error("dipole_field: sensor coincides with source");
  // T = 3*r*r^T - R^2*I, symmetric and traceless.
  const Eigen::Matrix3d tensor =
      3.0 * r * r.transpose() - rn * rn * Eigen::Matrix3d::Identity();
  const Vec3 field_t = kMu0 / (4.0 * kPi * std::pow(rn, 5)) * tensor * source.moment_am2;
  return field_t * kTeslaToMicrotesla;
}

double field_norm_envelope_ut(double moment_norm_am2, double k, double r_m) {
  if (r_m <= 0.0) throw std::domain_error("field_norm_envelope: R must be > 0");
  return kMu0 * k * moment_norm_am2 / (r_m * r_m * r_m) * kTeslaToMicrotesla;
}

Superstructure build_superstructure(int permutation_id, double base_moment_am2,
                                    const Vec3& row_axis, double unit_spacing_m,
                                    double magnet_height_m, const Vec3& moment_dir) {
  if (permutation_id < 1 || permutation_id > 6)
    throw std::invalid_argument("build_superstructure: permutation_id must be 1..6");
  // Lexicographic orderings of the multiset {1,2,3}.
  static constexpr std::array<std::array<int, 3>, 6> kOrderings = {{
      {1, 2, 3}, {1, 3, 2}, {2, 1, 3}, {2, 3, 1}, {3, 1, 2}, {3, 2, 1}}};
  const auto& mult = kOrderings[permutation_id - 1];

  Superstructure s;
  s.permutation_id = permutation_id;
  s.row_axis = row_axis.normalized();
  s.unit_spacing_m = unit_spacing_m;
  const Vec3 dir = moment_dir.normalized();
  for (int i = 0; i < 3; ++i) {
    DipoleSource unit;
    unit.position_m = i * unit_spacing_m * s.row_axis;
    unit.position_m.z() = magnet_height_m;
    unit.moment_am2 = mult[i] * base_moment_am2 * dir;
    s.units.push_back(unit);
  }
  return s;
}

Vec3 rotate_world_to_device(const Vec3& field_world, double yaw_deg,
                            double pitch_deg, double roll_deg) {
  const Eigen::AngleAxisd yaw(yaw_deg * kDegToRad, Vec3::UnitZ());
  const Eigen::AngleAxisd pitch(pitch_deg * kDegToRad, Vec3::UnitY());
  const Eigen::AngleAxisd roll(roll_deg * kDegToRad, Vec3::UnitX());
  // Device orientation = Rz(yaw)*Ry(pitch)*Rx(roll); world vectors map into
  // the device frame through its inverse.
  const Eigen::Quaterniond q = yaw * pitch * roll;
  return q.conjugate() * field_world;
}

Recording simulate_pass(const WalkSpec& walk, const Superstructure& structure,
                        const ClutterSpec& clutter, const SensorSpec& sensor,
                        std::uint64_t seed) {
  if (structure.units.size() != 3)
    throw std::invalid_argument("simulate_pass: superstructure must have 3 units");
  const RawSegment raw = simulate_raw(walk, &structure, clutter, sensor, seed);
  if (clutter.target_sir_db && !raw.events.empty())
    return assemble_with_target(raw, *clutter.target_sir_db, sensor, seed);
  return assemble(raw, 1.0, sensor, seed);
}

Recording simulate_session(std::span<const SessionSegment> plan,
                           const ClutterSpec& clutter, const SensorSpec& sensor,
                           std::uint64_t seed) {
  if (plan.empty())
    throw std::invalid_argument("simulate_session: empty plan");

  Recording out;
  out.sample_rate_hz = sensor.sample_rate_hz;
  out.seed = seed;
  double t_offset = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto& seg = plan[k];
    const Superstructure* s =
        seg.structure.has_value() ? &*seg.structure : nullptr;
    const RawSegment raw =
        simulate_raw(seg.walk, s, clutter, sensor, derive_seed(seed, k + 1));
    Recording part =
        (clutter.target_sir_db && !raw.events.empty())
            ? assemble_with_target(raw, *clutter.target_sir_db, sensor, seed)
            : assemble(raw, 1.0, sensor, seed);

    for (std::size_t i = 0; i < part.size(); ++i) {
      out.t_s.push_back(t_offset + part.t_s[i]);
      out.bx_ut.push_back(part.bx_ut[i]);
      out.by_ut.push_back(part.by_ut[i]);
      out.bz_ut.push_back(part.bz_ut[i]);
      out.pitch_deg.push_back(part.pitch_deg[i]);
      out.roll_deg.push_back(part.roll_deg[i]);
    }
    for (PassEvent ev : part.pass_events) {
      ev.closest_approach_s += t_offset;
      ev.span_begin_s += t_offset;
      ev.span_end_s += t_offset;
      if (!out.pass_events.empty() &&
          ev.span_begin_s < out.pass_events.back().span_end_s)
        throw std::invalid_argument("simulate_session: overlapping pass spans");
      out.pass_events.push_back(ev);
    }
    t_offset += raw.duration_s;
  }
  return out;
}

Recording decimate(const Recording& rec, int factor) {
  if (factor < 1) throw std::invalid_argument("decimate: factor must be >= 1");
  if (factor == 1) return rec;
  Recording out;
  out.sample_rate_hz = rec.sample_rate_hz / factor;
  out.seed = rec.seed;
  out.pass_events = rec.pass_events;
  for (std::size_t i = 0; i < rec.size(); i += factor) {
    out.t_s.push_back(rec.t_s[i]);
    out.bx_ut.push_back(rec.bx_ut[i]);
    out.by_ut.push_back(rec.by_ut[i]);
    out.bz_ut.push_back(rec.bz_ut[i]);
    out.pitch_deg.push_back(rec.pitch_deg[i]);
    out.roll_deg.push_back(rec.roll_deg[i]);
  }
  return out;
}

void write_recording_csv(const Recording& rec, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::fputs("t,bx,by,bz,pitch,roll\n", f);
  for (std::size_t i = 0; i < rec.size(); ++i)
    std::fprintf(f, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", rec.t_s[i], rec.bx_ut[i],
                 rec.by_ut[i], rec.bz_ut[i], rec.pitch_deg[i], rec.roll_deg[i]);
  std::fclose(f);

  nlohmann::json side;
  side["sample_rate"] = rec.sample_rate_hz;
  side["seed"] = rec.seed;
  side["pass_events"] = nlohmann::json::array();
  for (const auto& ev : rec.pass_events)
    side["pass_events"].push_back({{"structure_id", ev.structure_id},
                                   {"closest_approach", ev.closest_approach_s},
                                   {"span", {ev.span_begin_s, ev.span_end_s}}});
  std::ofstream out(path + ".events.json");
  out << side.dump(2) << "\n";
}

Recording read_recording_csv(const std::string& path) {
  std::ifstream side_in(path + ".events.json");
  if (!side_in) throw std::runtime_error("missing sidecar for " + path);
  nlohmann::json side = nlohmann::json::parse(side_in);

  Recording rec;
  rec.sample_rate_hz = side.at("sample_rate").get<double>();
  rec.seed = side.at("seed").get<std::uint64_t>();
  for (const auto& jev : side.at("pass_events")) {
    PassEvent ev;
    ev.structure_id = jev.at("structure_id").get<int>();
    ev.closest_approach_s = jev.at("closest_approach").get<double>();
    ev.span_begin_s = jev.at("span")[0].get<double>();
    ev.span_end_s = jev.at("span")[1].get<double>();
    rec.pass_events.push_back(ev);
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double t, bx, by, bz, p, r;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &t, &bx, &by, &bz,
                    &p, &r) != 6)
      throw std::runtime_error("malformed recording row in " + path);
    rec.t_s.push_back(t);
    rec.bx_ut.push_back(bx);
    rec.by_ut.push_back(by);
    rec.bz_ut.push_back(bz);
    rec.pitch_deg.push_back(p);
    rec.roll_deg.push_back(r);
  }
  return rec;
}

}  // namespace magsig::fieldsim
