#include "magsig/sigproc.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace magsig::sigproc {
namespace {
constexpr double kPi = 3.14159265358979323846;
}

const char* component_name(int c) {
  static constexpr const char* kNames[kComponentCount] = {"bx", "by", "bz",
                                                          "b",  "bh", "bv"};
  return kNames[c];
}

double magnetic_norm(double bx, double by, double bz) {
  return std::sqrt(bx * bx + by * by + bz * bz);
}

double vertical_component(double bx, double by, double bz, double pitch_rad,
                          double roll_rad) {
  return -std::sin(pitch_rad) * bx + std::sin(roll_rad) * by +
         std::cos(pitch_rad) * std::cos(roll_rad) * bz;
}

double horizontal_component(double norm, double vertical) {
  const double d = norm * norm - vertical * vertical;
  if (d < 0.0) {
    if (std::abs(vertical) > norm * (1.0 + 1.0e-9))
      throw std::domain_error("horizontal_component: |Bv| exceeds B");
    return 0.0;
  }
  return std::sqrt(d);
}

std::vector<ExtendedFrame> frame_stream(const fieldsim::Recording& rec,
                                        double window_s, double shift_s) {
  if (window_s <= 0.0 || shift_s <= 0.0)
    throw std::invalid_argument("frame_stream: window and shift must be > 0");
  const std::size_t total = rec.size();
  const std::size_t n =
      static_cast<std::size_t>(std::llround(window_s * rec.sample_rate_hz));
  if (n == 0 || total < n)
    throw std::invalid_argument("frame_stream: recording shorter than one window");

  // Derived channels per sample: norm, vertical, horizontal.
  std::vector<double> b(total), bv(total), bh(total);
  for (std::size_t i = 0; i < total; ++i) {
    b[i] = magnetic_norm(rec.bx_ut[i], rec.by_ut[i], rec.bz_ut[i]);
    bv[i] = vertical_component(rec.bx_ut[i], rec.by_ut[i], rec.bz_ut[i],
                               rec.pitch_deg[i] * kPi / 180.0,
                               rec.roll_deg[i] * kPi / 180.0);
    bh[i] = horizontal_component(b[i], bv[i]);
  }

  const double duration = total / rec.sample_rate_hz;
  const std::size_t count =
      static_cast<std::size_t>(std::floor((duration - window_s) / shift_s + 1e-9)) + 1;

  std::vector<ExtendedFrame> frames;
  frames.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t0 = k * shift_s;
    std::size_t start =
        static_cast<std::size_t>(std::llround(t0 * rec.sample_rate_hz));
    if (start + n > total) start = total - n;

    ExtendedFrame f;
    f.index = static_cast<int>(k);
    f.t_begin_s = t0;
    f.t_end_s = t0 + window_s;
    for (auto& comp : f.components) comp.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      f.components[kBx][i] = rec.bx_ut[start + i];
      f.components[kBy][i] = rec.by_ut[start + i];
      f.components[kBz][i] = rec.bz_ut[start + i];
      f.components[kB][i] = b[start + i];
      f.components[kBh][i] = bh[start + i];
      f.components[kBv][i] = bv[start + i];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void label_frames(std::vector<ExtendedFrame>& frames,
                  std::span<const fieldsim::PassEvent> pass_events) {
  for (auto& f : frames) {
    int label = 0;
    double best_dist = 0.0;
    for (const auto& ev : pass_events) {
      if (f.t_end_s < ev.span_begin_s || f.t_begin_s > ev.span_end_s) continue;
      const double center = 0.5 * (f.t_begin_s + f.t_end_s);
      const double dist = std::abs(center - ev.closest_approach_s);
      if (label == 0 || dist < best_dist) {
        label = ev.structure_id;
        best_dist = dist;
      }
    }
    f.label = label;
  }
}

double measure_sir_db(const fieldsim::Recording& rec) {
  const std::size_t total = rec.size();
  std::size_t n =
      static_cast<std::size_t>(std::llround(0.02 * rec.sample_rate_hz));
  if (n < 1) n = 1;
  const std::size_t hop = std::max<std::size_t>(1, n / 2);
  if (total < n) throw std::domain_error("measure_sir: recording too short");

  // DC of the norm signal is removed globally so the Earth-field offset does
  // not dominate the power ratio.
  std::vector<double> norm(total);
  double mean = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    norm[i] = magnetic_norm(rec.bx_ut[i], rec.by_ut[i], rec.bz_ut[i]);
    mean += norm[i];
  }
  mean /= static_cast<double>(total);

  double pattern_power = 0.0, background_power = 0.0;
  std::size_t pattern_count = 0, background_count = 0;
  for (std::size_t start = 0; start + n <= total; start += hop) {
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = norm[start + i] - mean;
      power += v * v;
    }
    power /= static_cast<double>(n);

    const double t0 = start / rec.sample_rate_hz;
    const double t1 = (start + n) / rec.sample_rate_hz;
    bool pattern = false;
    for (const auto& ev : rec.pass_events)
      if (t1 >= ev.span_begin_s && t0 <= ev.span_end_s) {
        pattern = true;
        break;
      }
    if (pattern) {
      pattern_power += power;
      ++pattern_count;
    } else {
      background_power += power;
      ++background_count;
    }
  }
  if (pattern_count == 0 || background_count == 0)
    throw std::domain_error("measure_sir: needs both pattern and background frames");
  return 10.0 * std::log10((pattern_power / pattern_count) /
                           (background_power / background_count));
}

void write_frames_jsonl(std::span<const ExtendedFrame> frames,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& f : frames) {
    nlohmann::json j;
    j["index"] = f.index;
    j["span"] = {f.t_begin_s, f.t_end_s};
    j["label"] = f.label;
    for (int c = 0; c < kComponentCount; ++c)
      j[component_name(c)] = f.components[c];
    out << j.dump() << "\n";
  }
}

}  // namespace magsig::sigproc
