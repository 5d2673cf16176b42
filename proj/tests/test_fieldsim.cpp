// Physics and simulator tests: dipole fields, superstructure construction,
// rotations, pass simulation, sessions and persistence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "magsig/fieldsim.hpp"
#include "magsig/sigproc.hpp"

using namespace magsig;
using fieldsim::DipoleSource;
using fieldsim::Vec3;

namespace {

DipoleSource unit_dipole_z() {
  DipoleSource d;
  d.moment_am2 = Vec3(0.0, 0.0, 1.0);
  return d;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

}  // namespace

TEST_CASE("dipole field: on-axis closed form") {
  // Sensor on the moment axis at 1 m: field = 2*mu0*M/(4*pi*R^3) along z.
  const Vec3 f = fieldsim::dipole_field_ut(Vec3(0, 0, 1), unit_dipole_z());
  CHECK(f.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.z() == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("dipole field: equatorial closed form") {
  // Sensor in the equatorial plane at 1 m: field = -mu0*M/(4*pi*R^3) along z.
  const Vec3 f = fieldsim::dipole_field_ut(Vec3(1, 0, 0), unit_dipole_z());
  CHECK(f.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.z() == doctest::Approx(-0.1).epsilon(1e-9));
}

TEST_CASE("dipole field: cubic decay along any fixed direction") {
  std::mt19937_64 rng(42);
  DipoleSource d;
  d.moment_am2 = Vec3(3.0, -2.0, 5.0);
  for (int k = 0; k < 50; ++k) {
    const Vec3 dir = random_unit(rng);
    const double n1 = fieldsim::dipole_field_ut(1.0 * dir, d).norm();
    const double n2 = fieldsim::dipole_field_ut(2.0 * dir, d).norm();
    CHECK(n2 == doctest::Approx(n1 / 8.0).epsilon(1e-9));
  }
}

TEST_CASE("dipole field: 1/R^3 law at arbitrary scales") {
  std::mt19937_64 rng(7);
  DipoleSource d;
  d.moment_am2 = Vec3(1.0, 4.0, -2.0);
  const Vec3 dir = random_unit(rng);
  const double ref = fieldsim::dipole_field_ut(dir, d).norm();
  for (double s : {0.3, 0.9, 2.5, 7.0, 31.0}) {
    const double n = fieldsim::dipole_field_ut(s * dir, d).norm();
    CHECK(n * s * s * s == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("dipole field: coupling tensor is symmetric and traceless") {
  // The map moment -> field is linear; recover its matrix from the three
  // basis moments and check symmetry and zero trace.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 pos(u(rng), u(rng), u(rng));
    if (pos.norm() < 0.1) continue;
    Eigen::Matrix3d a;
    for (int c = 0; c < 3; ++c) {
      DipoleSource d;
      d.moment_am2 = Vec3::Unit(c);
      a.col(c) = fieldsim::dipole_field_ut(pos, d);
    }
    const double scale = a.norm();
    CHECK((a - a.transpose()).norm() <= 1e-12 * scale);
    CHECK(std::abs(a.trace()) <= 1e-12 * scale);
  }
}

TEST_CASE("dipole field: directional norm stays within the factor-2 envelope") {
  // |field| / (mu0*M/(4*pi*R^3)) ranges from 1 (equator) to 2 (axis).
  std::mt19937_64 rng(3);
  DipoleSource d;
  d.moment_am2 = Vec3(0.0, 0.0, 125.0);
  const double r = 1.7;
  const double base =
      fieldsim::kMu0 * 125.0 / (4.0 * M_PI * r * r * r) * fieldsim::kTeslaToMicrotesla;
  double lo = 1e300, hi = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double ratio = fieldsim::dipole_field_ut(r * random_unit(rng), d).norm() / base;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    CHECK(ratio >= 1.0 - 1e-9);
    CHECK(ratio <= 2.0 + 1e-9);
  }
  // The sampled envelope actually spans the interval.
  CHECK(lo < 1.05);
  CHECK(hi > 1.95);
}

TEST_CASE("dipole field: coincident sensor and source") {
  CHECK_THROWS_AS(fieldsim::dipole_field_ut(Vec3::Zero(), unit_dipole_z()),
                  std::domain_error);
}

TEST_CASE("norm envelope: direct substitution") {
  CHECK(fieldsim::field_norm_envelope_ut(125.0, 0.2, 1.0) ==
        doctest::Approx(31.4159265).epsilon(1e-6));
  CHECK(fieldsim::field_norm_envelope_ut(125.0, 0.1, 0.5) ==
        doctest::Approx(125.6637).epsilon(1e-6));
  CHECK_THROWS_AS(fieldsim::field_norm_envelope_ut(125.0, 0.2, 0.0),
                  std::domain_error);
}

TEST_CASE("superstructure: lexicographic multiplicity orderings") {
  const auto s1 = fieldsim::build_superstructure(1);
  REQUIRE(s1.units.size() == 3);
  // First ordering is (1,2,3) magnets per unit, base moment 125 each.
  CHECK(s1.units[0].moment_am2.norm() == doctest::Approx(125.0));
  CHECK(s1.units[1].moment_am2.norm() == doctest::Approx(250.0));
  CHECK(s1.units[2].moment_am2.norm() == doctest::Approx(375.0));
  // Unit centers at 0, 3, 6 m along the row axis.
  CHECK(s1.units[0].position_m.x() == doctest::Approx(0.0));
  CHECK(s1.units[1].position_m.x() == doctest::Approx(3.0));
  CHECK(s1.units[2].position_m.x() == doctest::Approx(6.0));
  for (const auto& u : s1.units)
    CHECK(u.position_m.z() == doctest::Approx(1.5));
}

TEST_CASE("superstructure: six pairwise distinct orderings") {
  std::vector<std::array<double, 3>> seen;
  for (int id = 1; id <= 6; ++id) {
    const auto s = fieldsim::build_superstructure(id);
    std::array<double, 3> mult{s.units[0].moment_am2.norm(),
                               s.units[1].moment_am2.norm(),
                               s.units[2].moment_am2.norm()};
    for (const auto& other : seen) CHECK(other != mult);
    seen.push_back(mult);
  }
}

TEST_CASE("superstructure: first and last orderings are mirror images") {
  const auto a = fieldsim::build_superstructure(1);
  const auto b = fieldsim::build_superstructure(6);
  for (int i = 0; i < 3; ++i)
    CHECK(a.units[i].moment_am2.norm() ==
          doctest::Approx(b.units[2 - i].moment_am2.norm()));
}

TEST_CASE("superstructure: id out of range") {
  CHECK_THROWS_AS(fieldsim::build_superstructure(0), std::invalid_argument);
  CHECK_THROWS_AS(fieldsim::build_superstructure(7), std::invalid_argument);
}

TEST_CASE("superposition: dipole field is linear in the moment") {
  // A multi-magnet unit equals the sum of its single-magnet dipoles.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 pos(u(rng), u(rng) + 5.0, u(rng));
    DipoleSource a, b, ab;
    a.position_m = b.position_m = ab.position_m = Vec3(0.0, 0.0, 1.5);
    a.moment_am2 = Vec3(u(rng), u(rng), u(rng));
    b.moment_am2 = Vec3(u(rng), u(rng), u(rng));
    ab.moment_am2 = a.moment_am2 + b.moment_am2;
    const Vec3 sum =
        fieldsim::dipole_field_ut(pos, a) + fieldsim::dipole_field_ut(pos, b);
    const Vec3 total = fieldsim::dipole_field_ut(pos, ab);
    CHECK((sum - total).norm() <= 1e-12 * (sum.norm() + total.norm()));
  }
}

TEST_CASE("rotation: identity angles leave the vector unchanged") {
  const Vec3 v(1.0, 2.0, 3.0);
  const Vec3 r = fieldsim::rotate_world_to_device(v, 0.0, 0.0, 0.0);
  CHECK((r - v).norm() <= 1e-12);
}

TEST_CASE("rotation: norm preserved for arbitrary angles") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(-180.0, 180.0);
  std::uniform_real_distribution<double> comp(-50.0, 50.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 v(comp(rng), comp(rng), comp(rng));
    const Vec3 r =
        fieldsim::rotate_world_to_device(v, ang(rng), ang(rng), ang(rng));
    CHECK(r.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
  }
}

TEST_CASE("rotation: half-turn yaw flips the horizontal components") {
  const Vec3 r =
      fieldsim::rotate_world_to_device(Vec3(1.0, 2.0, 3.0), 180.0, 0.0, 0.0);
  CHECK(r.x() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r.y() == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(r.z() == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("simulate_pass: sample count and determinism") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 40.0;
  walk.start_offset_m = walk.pace_mps * walk.duration_s / 2.0 - 3.0;
  const auto structure = fieldsim::build_superstructure(2);
  const auto clutter = fieldsim::ClutterSpec::shielded();
  const auto a =
      fieldsim::simulate_pass(walk, structure, clutter, fieldsim::SensorSpec{}, 77);
  CHECK(a.size() == 4800);
  CHECK(a.sample_rate_hz == doctest::Approx(120.0));
  REQUIRE(a.pass_events.size() == 1);
  CHECK(a.pass_events[0].structure_id == 2);
  CHECK(a.pass_events[0].span_begin_s >= 0.0);
  CHECK(a.pass_events[0].span_end_s <= walk.duration_s);

  const auto b =
      fieldsim::simulate_pass(walk, structure, clutter, fieldsim::SensorSpec{}, 77);
  CHECK(a.bx_ut == b.bx_ut);
  CHECK(a.by_ut == b.by_ut);
  CHECK(a.bz_ut == b.bz_ut);
  CHECK(a.t_s == b.t_s);
}

TEST_CASE("simulate_pass: shielded clutter keeps non-pass norm variation small") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 40.0;
  walk.start_offset_m = walk.pace_mps * walk.duration_s / 2.0 - 3.0;
  const auto rec = fieldsim::simulate_pass(walk, fieldsim::build_superstructure(1),
                                           fieldsim::ClutterSpec::shielded(),
                                           fieldsim::SensorSpec{}, 13);
  REQUIRE(rec.pass_events.size() == 1);
  const auto& ev = rec.pass_events[0];
  // Fluctuation power of non-pass 20 ms frames: within each short frame the
  // structure tail is essentially constant, so the per-frame standard
  // deviation isolates the interference floor.
  const std::size_t frame_len =
      static_cast<std::size_t>(std::lround(0.02 * rec.sample_rate_hz));
  std::vector<double> frame_stds;
  for (std::size_t start = 0; start + frame_len <= rec.size();
       start += frame_len) {
    const double t0 = rec.t_s[start];
    const double t1 = rec.t_s[start + frame_len - 1];
    if (t1 >= ev.span_begin_s && t0 <= ev.span_end_s) continue;
    double mean = 0.0;
    for (std::size_t i = start; i < start + frame_len; ++i)
      mean += sigproc::magnetic_norm(rec.bx_ut[i], rec.by_ut[i], rec.bz_ut[i]);
    mean /= frame_len;
    double var = 0.0;
    for (std::size_t i = start; i < start + frame_len; ++i) {
      const double v =
          sigproc::magnetic_norm(rec.bx_ut[i], rec.by_ut[i], rec.bz_ut[i]);
      var += (v - mean) * (v - mean);
    }
    frame_stds.push_back(std::sqrt(var / frame_len));
  }
  REQUIRE(frame_stds.size() > 100);
  double avg = 0.0;
  for (double v : frame_stds) avg += v;
  avg /= frame_stds.size();
  CHECK(avg < 0.5);
}

TEST_CASE("simulate_pass: target SIR lands within one decibel") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 35.65 / walk.pace_mps;
  walk.lateral_distance_m = 0.9;
  walk.start_offset_m = walk.pace_mps * walk.duration_s / 2.0 - 3.0;
  fieldsim::ClutterSpec clutter;
  DipoleSource infra;
  infra.position_m = Vec3(-12.0, 6.0, -1.0);
  infra.moment_am2 = Vec3(0.0, 0.0, 450.0);
  clutter.static_dipoles = {infra};
  clutter.noise_std_ut = 2.8;
  clutter.drift_scale_ut = 0.1;
  clutter.target_sir_db = 8.0;
  for (std::uint64_t seed : {101, 202, 303}) {
    const auto rec =
        fieldsim::simulate_pass(walk, fieldsim::build_superstructure(3), clutter,
                                fieldsim::SensorSpec{}, seed);
    const double sir = sigproc::measure_sir_db(rec);
    CHECK(sir > 7.0);
    CHECK(sir < 9.0);
  }
}

TEST_CASE("simulate_session: pass counts, gaps and duration") {
  fieldsim::WalkSpec walk;
  walk.pace_mps = 2.0;
  walk.duration_s = 20.0;
  walk.start_offset_m = walk.pace_mps * walk.duration_s / 2.0 - 3.0;

  std::vector<fieldsim::SessionSegment> plan;
  for (int pass = 0; pass < 10; ++pass)
    for (int id = 1; id <= 6; ++id) {
      fieldsim::SessionSegment seg;
      seg.structure = fieldsim::build_superstructure(id);
      seg.walk = walk;
      plan.push_back(seg);
    }
  const auto rec = fieldsim::simulate_session(plan, fieldsim::ClutterSpec::shielded(),
                                              fieldsim::SensorSpec{}, 5);
  CHECK(rec.pass_events.size() == 60);
  CHECK(rec.duration_s() == doctest::Approx(60 * 20.0));
  for (std::size_t i = 1; i < rec.pass_events.size(); ++i)
    CHECK(rec.pass_events[i].span_begin_s >= rec.pass_events[i - 1].span_end_s);
}

TEST_CASE("simulate_session: gap-only plan has no pass events") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 10.0;
  std::vector<fieldsim::SessionSegment> plan(3);
  for (auto& seg : plan) seg.walk = walk;
  const auto rec = fieldsim::simulate_session(plan, fieldsim::ClutterSpec::shielded(),
                                              fieldsim::SensorSpec{}, 8);
  CHECK(rec.pass_events.empty());
  CHECK(rec.duration_s() == doctest::Approx(30.0));
}

TEST_CASE("simulate_session: empty plan rejected") {
  std::vector<fieldsim::SessionSegment> plan;
  CHECK_THROWS_AS(fieldsim::simulate_session(plan, fieldsim::ClutterSpec::shielded(),
                                             fieldsim::SensorSpec{}, 1),
                  std::invalid_argument);
}

TEST_CASE("decimate: keeps every k-th sample") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 20.0;
  const auto rec = fieldsim::simulate_pass(walk, fieldsim::build_superstructure(1),
                                           fieldsim::ClutterSpec::shielded(),
                                           fieldsim::SensorSpec{}, 3);
  const auto half = fieldsim::decimate(rec, 2);
  CHECK(half.sample_rate_hz == doctest::Approx(60.0));
  CHECK(half.size() == rec.size() / 2);
  for (std::size_t i = 0; i < half.size(); ++i)
    CHECK(half.bz_ut[i] == rec.bz_ut[2 * i]);
  CHECK_THROWS_AS(fieldsim::decimate(rec, 0), std::invalid_argument);
}

TEST_CASE("recording CSV round-trip") {
  fieldsim::WalkSpec walk;
  walk.duration_s = 15.0;
  walk.pitch_deg = 4.0;
  walk.roll_deg = -2.0;
  const auto rec = fieldsim::simulate_pass(walk, fieldsim::build_superstructure(5),
                                           fieldsim::ClutterSpec::shielded(),
                                           fieldsim::SensorSpec{}, 21);
  const std::string path =
      (std::filesystem::temp_directory_path() / "magsig_test_rec.csv").string();
  fieldsim::write_recording_csv(rec, path);
  const auto back = fieldsim::read_recording_csv(path);
  REQUIRE(back.size() == rec.size());
  CHECK(back.sample_rate_hz == doctest::Approx(rec.sample_rate_hz));
  CHECK(back.seed == rec.seed);
  REQUIRE(back.pass_events.size() == rec.pass_events.size());
  CHECK(back.pass_events[0].structure_id == rec.pass_events[0].structure_id);
  CHECK(back.pass_events[0].closest_approach_s ==
        doctest::Approx(rec.pass_events[0].closest_approach_s));
  for (std::size_t i = 0; i < rec.size(); i += 97) {
    CHECK(back.bx_ut[i] == doctest::Approx(rec.bx_ut[i]).epsilon(1e-7));
    CHECK(back.bz_ut[i] == doctest::Approx(rec.bz_ut[i]).epsilon(1e-7));
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".events.json");
}
