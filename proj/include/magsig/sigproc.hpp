// Signal transforms (norm, vertical/horizontal split), sliding-window framing
// into labeled extended frames, and the SIR measurement convention.

#ifndef MAGSIG_SIGPROC_HPP
#define MAGSIG_SIGPROC_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

#include "magsig/fieldsim.hpp"

namespace magsig::sigproc {

// Component order inside an extended frame.
enum Component { kBx = 0, kBy, kBz, kB, kBh, kBv, kComponentCount };
const char* component_name(int c);

// One windowed slice of the six signal components.
struct ExtendedFrame {
  int index = 0;
  double t_begin_s = 0.0;
  double t_end_s = 0.0;
  std::array<std::vector<double>, kComponentCount> components;
  int label = 0;  // 0 = no structure, 1..6 = structure id

  std::size_t samples_per_component() const { return components[0].size(); }
};

double magnetic_norm(double bx, double by, double bz);

// Vertical field component recovered from pitch/roll (radians), as
// -sin(P)*Bx + sin(R)*By + cos(P)*cos(R)*Bz.
double vertical_component(double bx, double by, double bz, double pitch_rad,
                          double roll_rad);

// sqrt(B^2 - Bv^2); |Bv| may exceed B only within 1e-9 relative slack
// (clamped to 0), otherwise throws std::domain_error.
double horizontal_component(double norm, double vertical);

// Slices a recording into extended frames at hop `shift_s`. The derived
// channels B, Bv, Bh are computed per sample before slicing. Throws
// std::invalid_argument when the recording is shorter than one window.
std::vector<ExtendedFrame> frame_stream(const fieldsim::Recording& rec,
                                        double window_s = 12.5,
                                        double shift_s = 0.08);

// Assigns label j to every frame whose span intersects the pass span of
// structure j; ties between events resolved by nearest closest approach.
void label_frames(std::vector<ExtendedFrame>& frames,
                  std::span<const fieldsim::PassEvent> pass_events);

// Power ratio (dB) between 20 ms half-overlapping norm-signal frames that
// intersect pass spans and those that do not. Power is the mean of squared
// mean-removed norm samples. Throws std::domain_error when either class of
// frames is empty.
double measure_sir_db(const fieldsim::Recording& rec);

// Debug dump: one JSON-lines record per frame.
void write_frames_jsonl(std::span<const ExtendedFrame> frames,
                        const std::string& path);

}  // namespace magsig::sigproc

#endif  // MAGSIG_SIGPROC_HPP
