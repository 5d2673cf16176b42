// Magnetometer walk simulator: point-dipole superstructures, clutter models
// and device-frame sensing of a walker passing a row of permanent magnets.

#ifndef MAGSIG_FIELDSIM_HPP
#define MAGSIG_FIELDSIM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace magsig::fieldsim {

using Vec3 = Eigen::Vector3d;

// Vacuum permeability [T*m/A].
inline constexpr double kMu0 = 4.0e-7 * 3.14159265358979323846;
inline constexpr double kTeslaToMicrotesla = 1.0e6;

// One magnet unit modeled as a point dipole.
struct DipoleSource {
  Vec3 position_m = Vec3::Zero();   // world frame [m]
  Vec3 moment_am2 = Vec3::Zero();   // magnetic moment [A*m^2]
};

// Row of 3 magnet units with multiplicities {3,2,1} ordered by permutation id.
struct Superstructure {
  int permutation_id = 1;           // 1..6, lexicographic multiplicity order
  std::vector<DipoleSource> units;  // exactly 3, spaced along row_axis
  Vec3 row_axis = Vec3::UnitX();
  double unit_spacing_m = 3.0;

  double row_length_m() const { return 2.0 * unit_spacing_m; }
};

struct WalkSpec {
  double pace_mps = 1.2;            // walking pace, in [0.8, 2.0]
  double lateral_distance_m = 0.75; // perpendicular offset from the row
  double sensor_height_m = 1.0;     // in-pocket phone height
  double magnet_height_m = 1.5;
  double heading_azimuth_deg = 0.0; // device yaw, [0, 360)
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
  double duration_s = 40.0;
  double start_offset_m = 8.0;      // distance before the first unit at t=0
};

struct ClutterSpec {
  Vec3 earth_field_ut = Vec3(20.0, 0.0, -40.0);
  std::vector<DipoleSource> static_dipoles;  // building infrastructure
  double noise_std_ut = 1.5;                 // white, per axis
  double drift_scale_ut = 0.2;               // random-walk amplitude per sqrt(s)
  std::optional<double> target_sir_db;       // empty = unscaled structure field

  // Near-zero interference training environment.
  static ClutterSpec shielded();
};

struct SensorSpec {
  double sample_rate_hz = 120.0;
  double resolution_ut = 0.3;   // quantization step
  double range_ut = 1600.0;     // clipping range
};

// One pass of the walker by a superstructure.
struct PassEvent {
  int structure_id = 0;              // 1..6
  double closest_approach_s = 0.0;   // time abreast of the row center
  double span_begin_s = 0.0;
  double span_end_s = 0.0;
};

// Uniformly sampled device-frame magnetometer recording.
struct Recording {
  double sample_rate_hz = 120.0;
  std::vector<double> t_s;
  std::vector<double> bx_ut, by_ut, bz_ut;  // device frame
  std::vector<double> pitch_deg, roll_deg;
  std::vector<PassEvent> pass_events;
  std::uint64_t seed = 0;

  std::size_t size() const { return t_s.size(); }
  double duration_s() const { return size() / sample_rate_hz; }
};

// Field of a point dipole at the sensor position [uT]. Throws
// std::domain_error when sensor and source coincide.
Vec3 dipole_field_ut(const Vec3& sensor_pos_m, const DipoleSource& source);

// Norm decay envelope mu0*K*M/R^3 expressed in uT. K is dimensionless,
// typically in [0.1, 0.2]. Throws std::domain_error for R <= 0.
double field_norm_envelope_ut(double moment_norm_am2, double k, double r_m);

// Builds the permutation_id-th lexicographic ordering of unit multiplicities
// (1,2,3)...(3,2,1), unit centers at 0, spacing, 2*spacing along row_axis.
Superstructure build_superstructure(int permutation_id,
                                    double base_moment_am2 = 125.0,
                                    const Vec3& row_axis = Vec3::UnitX(),
                                    double unit_spacing_m = 3.0,
                                    double magnet_height_m = 1.5,
                                    const Vec3& moment_dir = Vec3::UnitZ());

// Z-Y-X intrinsic rotation (yaw, pitch, roll) of a world vector into the
// device frame. Norm preserving.
Vec3 rotate_world_to_device(const Vec3& field_world, double yaw_deg,
                            double pitch_deg, double roll_deg);

// Simulates one straight-line pass parallel to the row axis. Deterministic
// given the seed. Throws std::domain_error if the trajectory intersects a
// dipole position, std::invalid_argument on invalid specs.
Recording simulate_pass(const WalkSpec& walk, const Superstructure& structure,
                        const ClutterSpec& clutter, const SensorSpec& sensor,
                        std::uint64_t seed);

// Segment of a session: a pass when structure is set, otherwise a
// clutter-only gap of walk.duration_s.
struct SessionSegment {
  std::optional<Superstructure> structure;
  WalkSpec walk;
};

// Concatenated multi-segment recording; pass_events are complete and ordered.
Recording simulate_session(std::span<const SessionSegment> plan,
                           const ClutterSpec& clutter, const SensorSpec& sensor,
                           std::uint64_t seed);

// Keeps every `factor`-th sample; pass events unchanged.
Recording decimate(const Recording& rec, int factor);

// CSV persistence: header t,bx,by,bz,pitch,roll at 9 significant digits plus
// a `<path>.events.json` sidecar with sample_rate, seed and pass_events.
void write_recording_csv(const Recording& rec, const std::string& path);
Recording read_recording_csv(const std::string& path);

}  // namespace magsig::fieldsim

#endif  // MAGSIG_FIELDSIM_HPP
