#pragma once

// Bundled synthetic dataset. Activities are (action, object) pairs such as
// "peel_cucumber". Each modality carries a distinct signature:
//   eye   (2 ch, normalized gaze)  - fixation point set by the object;
//   emg   (4 ch, rectified EMG)    - active channels and burst rate set by the action;
//   body  (4 ch, joint degrees)    - dominant joints and swing rate set by the action;
//   imu_accel (3 ch, m/s^2)        - action vibration plus object-dependent tilt.
// A caption therefore needs the object (eye) and the action (emg or body).
//
// Two recording kinds are written:
//   single-activity recordings with a teacher key (alignment data), and
//   two-activity recordings "A then B" whose caption names both in order
//   (the temporal-token task).
// Subjects differ in gain, posture and gaze offset; every recording has
// its own phase, timing jitter, sensor noise and missing readings.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/bridge/prompt.hpp"
#include "s2t/bridge/text.hpp"
#include "s2t/checkpoint.hpp"
#include "s2t/encoder/teacher.hpp"
#include "s2t/ingest/dataset.hpp"
#include "s2t/json_io.hpp"
#include "s2t/pipeline/config.hpp"

namespace s2t::pipeline {

struct Activity {
  std::size_t action = 0;
  std::size_t object = 0;
  std::string label;
};

inline std::vector<Activity> synthetic_activities(const SyntheticSpec& spec) {
  std::vector<Activity> out;
  for (std::size_t a = 0; a < spec.actions.size(); ++a) {
    for (std::size_t o = 0; o < spec.objects.size(); ++o) out.push_back({a, o, spec.actions[a] + "_" + spec.objects[o]});
  }
  return out;
}

/// "A person is peeling a cucumber, then slicing a potato."
inline std::string sequence_caption(const std::string& first_label, const std::string& second_label) {
  std::string a = bridge::rephrase_label(first_label);
  std::string b = bridge::rephrase_label(second_label);
  a.pop_back();  // trailing period
  const std::string prefix = "A person is ";
  if (b.starts_with(prefix)) b = b.substr(prefix.size());
  return a + ", then " + b;
}

namespace detail {

struct Subject {
  double gain = 1.0;
  double gaze_x = 0.0;
  double gaze_y = 0.0;
  std::array<double, 4> posture{};
};

inline double fraction(std::size_t i, std::size_t n) { return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5; }

/// One sample of a modality for `act` at time t. `phase` is per recording.
inline std::vector<double> synth_sample(ingest::Modality m, const Activity& act, const SyntheticSpec& spec,
                                        const Subject& subj, double t, double phase, Rng& rng) {
  constexpr double tau = 2.0 * std::numbers::pi;
  const std::size_t n_actions = spec.actions.size();
  const double obj = fraction(act.object, spec.objects.size());
  const double noise = spec.noise;
  switch (m) {
    case ingest::Modality::eye: {
      const double x = 0.25 + 0.5 * obj + subj.gaze_x + 0.05 * std::sin(tau * 0.7 * t + phase);
      const double y = 0.7 - 0.4 * obj + subj.gaze_y + 0.05 * std::cos(tau * 0.4 * t + phase);
      std::vector<double> v{x + 0.5 * noise * rng.normal(), y + 0.5 * noise * rng.normal()};
      // Occasional tracker glitches land outside the valid range.
      for (double& g : v)
        if (rng.uniform() < 0.002) g = rng.uniform() < 0.5 ? -0.3 : 1.3;
      return v;
    }
    case ingest::Modality::emg: {
      const double f = 0.8 + 0.9 * static_cast<double>(act.action);
      std::vector<double> v(4);
      for (std::size_t c = 0; c < 4; ++c) {
        const double amp = c % n_actions == act.action % n_actions ? 1.0 : 0.2;
        const double env = subj.gain * amp * (0.6 + 0.4 * std::sin(tau * f * t + phase + static_cast<double>(c)));
        v[c] = env * std::abs(rng.normal()) + noise * rng.normal();
      }
      return v;
    }
    case ingest::Modality::body: {
      const double f = 0.5 + 0.6 * static_cast<double>(act.action);
      std::vector<double> v(4);
      for (std::size_t c = 0; c < 4; ++c) {
        const double amp = c % n_actions == act.action % n_actions ? 45.0 : 10.0;
        v[c] = subj.posture[c] + subj.gain * amp * std::sin(tau * f * t + phase + static_cast<double>(c) * 0.8) +
               20.0 * noise * rng.normal();
      }
      return v;
    }
    case ingest::Modality::imu_accel:
    case ingest::Modality::imu_gyro:
    case ingest::Modality::imu_orient:
    case ingest::Modality::watch_accel: {
      const double f = 1.0 + 1.2 * static_cast<double>(act.action);
      const double tilt = 0.6 * obj;
      const double g = 9.81;
      return {g * std::sin(tilt) + 2.0 * subj.gain * std::sin(tau * f * t + phase) + noise * rng.normal(),
              1.5 * subj.gain * std::cos(tau * f * t + phase) + noise * rng.normal(),
              g * std::cos(tilt) + noise * rng.normal()};
    }
  }
  return {};
}

/// Raw stream for a recording made of consecutive activity segments.
inline ingest::SensorStream synth_stream(ingest::Modality m, const std::string& clip_id,
                                         const std::vector<Activity>& parts, double duration_s,
                                         const SyntheticSpec& spec, const Subject& subj, Rng& rng) {
  ingest::SensorStream s;
  s.clip_id = clip_id;
  s.modality = m;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dt = 1.0 / spec.source_hz;
  const auto count = static_cast<std::size_t>(std::llround(duration_s * spec.source_hz)) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    // Jitter keeps timestamps strictly increasing but irregular; the
    // endpoints stay exact so resampling covers the whole recording.
    const double jitter = (k == 0 || k + 1 == count) ? 0.0 : rng.uniform(-0.2, 0.2) * dt;
    const double t = static_cast<double>(k) * dt + jitter;
    const std::size_t part = std::min(parts.size() - 1, static_cast<std::size_t>(t / duration_s * static_cast<double>(parts.size())));
    auto v = synth_sample(m, parts[part], spec, subj, t, phase, rng);
    if (s.channels == 0) s.channels = v.size();
    for (double& x : v)
      if (k > 0 && k + 1 < count && rng.uniform() < spec.missing_rate) x = ingest::kMissing;
    s.timestamps.push_back(t);
    s.values.insert(s.values.end(), v.begin(), v.end());
  }
  return s;
}

}  // namespace detail

struct SyntheticDataset {
  std::filesystem::path manifest;
  std::filesystem::path teacher;
  std::filesystem::path instruct;
  std::filesystem::path captions;
  std::filesystem::path templates;
};

/// Write the dataset under `dir`: streams/*.csv, manifest.json, teacher.s2te
/// (one synthetic teacher vector of `teacher_dim` per activity label),
/// instruct.jsonl, captions.jsonl and templates.json.
inline SyntheticDataset write_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed, std::size_t teacher_dim,
                                                const std::filesystem::path& dir) {
  spec.validate();
  const Rng root = Rng(seed).substream("synthetic");
  Rng subject_rng = root.substream("subjects");
  const auto acts = synthetic_activities(spec);

  std::vector<ingest::Modality> modalities;
  for (const auto& name : spec.modalities) modalities.push_back(ingest::parse_modality(name));

  std::vector<detail::Subject> subjects(spec.subjects);
  for (auto& s : subjects) {
    s.gain = subject_rng.uniform(0.85, 1.15);
    s.gaze_x = subject_rng.uniform(-0.03, 0.03);
    s.gaze_y = subject_rng.uniform(-0.03, 0.03);
    for (double& p : s.posture) p = subject_rng.uniform(-10.0, 10.0);
  }

  ingest::Manifest manifest;
  manifest.base_dir = dir;
  std::vector<nlohmann::ordered_json> caption_rows;
  auto add_recording = [&](const std::string& clip_id, std::size_t subject, const std::vector<Activity>& parts,
                           double duration, std::string label, std::string caption,
                           std::optional<std::string> teacher_key) {
    Rng rng = root.substream("recording/" + clip_id);
    ingest::ManifestEntry e;
    e.clip_id = clip_id;
    e.subject_id = "subject" + std::to_string(subject + 1);
    for (auto m : modalities) {
      const std::string file = "streams/" + clip_id + "." + std::string(ingest::to_string(m)) + ".csv";
      io::atomic_write(dir / file, ingest::format_stream(detail::synth_stream(m, clip_id, parts, duration, spec,
                                                                              subjects[subject], rng)));
      e.modality_files[m] = file;
    }
    e.label = std::move(label);
    e.caption = std::move(caption);
    e.teacher_key = std::move(teacher_key);
    caption_rows.push_back({{"clip_id", e.clip_id}, {"caption", e.caption}});
    manifest.entries.push_back(std::move(e));
  };

  for (std::size_t s = 0; s < spec.subjects; ++s) {
    for (const auto& act : acts) {
      for (std::size_t r = 0; r < spec.encoder_repeats; ++r) {
        const std::string id = "s" + std::to_string(s + 1) + "_" + act.label + "_r" + std::to_string(r + 1);
        add_recording(id, s, {act}, spec.encoder_recording_s, act.label, bridge::rephrase_label(act.label), act.label);
      }
    }
    for (const auto& a : acts) {
      for (const auto& b : acts) {
        if (a.label == b.label) continue;
        for (std::size_t r = 0; r < spec.caption_repeats; ++r) {
          const std::string id =
              "s" + std::to_string(s + 1) + "_" + a.label + "_then_" + b.label + "_r" + std::to_string(r + 1);
          add_recording(id, s, {a, b}, spec.caption_recording_s, a.label + "+" + b.label,
                        sequence_caption(a.label, b.label), std::nullopt);
        }
      }
    }
  }

  SyntheticDataset out{dir / "manifest.json", dir / "teacher.s2te", dir / "instruct.jsonl", dir / "captions.jsonl",
                       dir / "templates.json"};
  io::atomic_write(out.manifest, ingest::manifest_to_json(manifest).dump(2) + "\n");

  std::map<std::string, Array> vectors;
  for (const auto& act : acts) vectors.emplace(act.label, encoder::synth_teacher(act.label, seed, teacher_dim));
  io::atomic_write(out.teacher, encoder::TeacherProvider::from_map(teacher_dim, std::move(vectors)).to_binary());

  std::vector<nlohmann::ordered_json> instruct;
  for (const auto& act : acts) {
    for (const auto& q : spec.questions) {
      instruct.push_back({{"teacher_key", act.label}, {"question", q}, {"answer", bridge::rephrase_label(act.label)}});
    }
  }
  io::atomic_write(out.instruct, json_io::to_jsonl(instruct));
  io::atomic_write(out.captions, json_io::to_jsonl(caption_rows));
  io::atomic_write(out.templates, bridge::PromptTemplates::defaults().to_json().dump(2) + "\n");
  return out;
}

}  // namespace s2t::pipeline
