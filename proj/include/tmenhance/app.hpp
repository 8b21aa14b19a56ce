// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pipeline driver behind the command-line tool: run configuration, model
// files, training, enhancement in the four synthesis modes, evaluation and
// corpus simulation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tmenhance/corpus_io.hpp"
#include "tmenhance/envelope_mapper.hpp"
#include "tmenhance/error.hpp"
#include "tmenhance/eval_metrics.hpp"
#include "tmenhance/excitation_mapper.hpp"
#include "tmenhance/features.hpp"
#include "tmenhance/gmm.hpp"
#include "tmenhance/parallel.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

// aa: mapped filter and excitation; at: mapped filter, TM excitation;
// ta: TM filter, mapped excitation; tt: plain resynthesis.
enum class SynthesisMode { kAA, kAT, kTA, kTT };

struct RunConfig {
  AnalysisConfig analysis{};
  int mixtures_global = 256;
  int mixtures_per_phone = 16;
  int bands = 8;
  Spacing spacing = Spacing::kLinear;
  TiltMode tilt_mode = TiltMode::kPowerConsistent;
  Scheme scheme = Scheme::kPhoneHard;
  ContextSource context = ContextSource::kTrueLabel;
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = all cores
  int em_max_iter = 50;
  double em_tolerance = 1e-5;
  TmProfile profile{};
};

// ---------------------------------------------------------------------------
// Names

inline Scheme ParseScheme(std::string_view s) {
  if (s == "sm") return Scheme::kSoft;
  if (s == "hm") return Scheme::kHard;
  if (s == "pdsm") return Scheme::kPhoneSoft;
  if (s == "pdhm") return Scheme::kPhoneHard;
  throw Error(ErrorKind::kParseError, "unknown scheme '" + std::string(s) + "'");
}

inline std::string_view SchemeName(Scheme s) {
  switch (s) {
    case Scheme::kSoft: return "sm";
    case Scheme::kHard: return "hm";
    case Scheme::kPhoneSoft: return "pdsm";
    case Scheme::kPhoneHard: return "pdhm";
  }
  return "";
}

inline ContextSource ParseContext(std::string_view s) {
  if (s == "true") return ContextSource::kTrueLabel;
  if (s == "gmm") return ContextSource::kGmmClassifier;
  if (s == "file") return ContextSource::kExternalFile;
  throw Error(ErrorKind::kParseError, "unknown context '" + std::string(s) + "'");
}

inline std::string_view ContextName(ContextSource c) {
  switch (c) {
    case ContextSource::kTrueLabel: return "true";
    case ContextSource::kGmmClassifier: return "gmm";
    case ContextSource::kExternalFile: return "file";
  }
  return "";
}

inline SynthesisMode ParseMode(std::string_view s) {
  if (s == "aa") return SynthesisMode::kAA;
  if (s == "at") return SynthesisMode::kAT;
  if (s == "ta") return SynthesisMode::kTA;
  if (s == "tt") return SynthesisMode::kTT;
  throw Error(ErrorKind::kParseError, "unknown mode '" + std::string(s) + "'");
}

inline std::string_view ModeName(SynthesisMode m) {
  switch (m) {
    case SynthesisMode::kAA: return "aa";
    case SynthesisMode::kAT: return "at";
    case SynthesisMode::kTA: return "ta";
    case SynthesisMode::kTT: return "tt";
  }
  return "";
}

inline TiltMode ParseTiltMode(std::string_view s) {
  if (s == "power") return TiltMode::kPowerConsistent;
  if (s == "literal") return TiltMode::kPaperLiteral;
  throw Error(ErrorKind::kParseError, "unknown tilt mode '" + std::string(s) + "'");
}

inline std::string_view TiltModeName(TiltMode m) {
  return m == TiltMode::kPowerConsistent ? "power" : "literal";
}

inline Spacing ParseSpacing(std::string_view s) {
  if (s == "linear") return Spacing::kLinear;
  if (s == "mel") return Spacing::kMel;
  throw Error(ErrorKind::kParseError, "unknown spacing '" + std::string(s) + "'");
}

inline std::string_view SpacingName(Spacing s) {
  return s == Spacing::kLinear ? "linear" : "mel";
}

inline bool MapsEnvelope(SynthesisMode m) {
  return m == SynthesisMode::kAA || m == SynthesisMode::kAT;
}

inline bool MapsExcitation(SynthesisMode m) {
  return m == SynthesisMode::kAA || m == SynthesisMode::kTA;
}

// Labels are needed only when some mapping in this mode actually reads the
// phone context. The tilt mapping always does.
inline bool NeedsLabels(const RunConfig& cfg, SynthesisMode mode) {
  if (cfg.context == ContextSource::kGmmClassifier) return false;
  return (MapsEnvelope(mode) && cfg.scheme == Scheme::kPhoneHard) ||
         MapsExcitation(mode);
}

// ---------------------------------------------------------------------------
// Config file

namespace detail {

inline std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T v{};
  std::string rest;
  if (!(ss >> v) || (ss >> rest)) {
    throw Error(ErrorKind::kParseError,
                "bad value '" + value + "' for '" + key + "'");
  }
  return v;
}

}  // namespace detail

inline void SetConfigValue(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  using detail::ParseNumber;
  if (key == "lpc_order") cfg.analysis.lpc_order = ParseNumber<int>(key, value);
  else if (key == "frame_shift_ms") cfg.analysis.frame_shift_ms = ParseNumber<double>(key, value);
  else if (key == "window_ms") cfg.analysis.window_ms = ParseNumber<double>(key, value);
  else if (key == "dft_size") cfg.analysis.dft_size = ParseNumber<int>(key, value);
  else if (key == "mixtures_global") cfg.mixtures_global = ParseNumber<int>(key, value);
  else if (key == "mixtures_per_phone") cfg.mixtures_per_phone = ParseNumber<int>(key, value);
  else if (key == "bands") cfg.bands = ParseNumber<int>(key, value);
  else if (key == "spacing") cfg.spacing = ParseSpacing(value);
  else if (key == "tilt_mode") cfg.tilt_mode = ParseTiltMode(value);
  else if (key == "scheme") cfg.scheme = ParseScheme(value);
  else if (key == "context_source") cfg.context = ParseContext(value);
  else if (key == "seed") cfg.seed = ParseNumber<std::uint64_t>(key, value);
  else if (key == "workers") cfg.workers = ParseNumber<int>(key, value);
  else if (key == "em_max_iter") cfg.em_max_iter = ParseNumber<int>(key, value);
  else if (key == "em_tolerance") cfg.em_tolerance = ParseNumber<double>(key, value);
  else if (key == "tm_cutoff_hz") cfg.profile.cutoff_hz = ParseNumber<double>(key, value);
  else if (key == "tm_slope_db_per_octave") cfg.profile.slope_db_per_octave = ParseNumber<double>(key, value);
  else if (key == "tm_noise_floor_db") cfg.profile.noise_floor_db = ParseNumber<double>(key, value);
  else throw Error(ErrorKind::kParseError, "unknown config key '" + key + "'");
}

inline void LoadConfigFile(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open config " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::Trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kParseError,
                  path.string() + ":" + std::to_string(line_no) +
                      ": expected 'key = value'");
    }
    try {
      SetConfigValue(cfg, detail::Trim(line.substr(0, eq)),
                     detail::Trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(line_no) +
                                ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Fingerprint and seeds

inline std::uint64_t Fnv1a(std::string_view bytes,
                           std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

// Everything that changes the meaning of a feature vector.
inline std::string FeatureConfigString(const RunConfig& cfg) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "rate=%d;lpc_order=%d;frame_shift_ms=%.17g;window_ms=%.17g;"
                "dft_size=%d;bands=%d;spacing=%s",
                kCorpusRateHz, cfg.analysis.lpc_order, cfg.analysis.frame_shift_ms,
                cfg.analysis.window_ms, cfg.analysis.dft_size, cfg.bands,
                std::string(SpacingName(cfg.spacing)).c_str());
  return buf;
}

inline std::uint64_t Fingerprint(const RunConfig& cfg) {
  return Fnv1a(FeatureConfigString(cfg));
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view tag) {
  char raw[8];
  for (int i = 0; i < 8; ++i) raw[i] = static_cast<char>(seed >> (8 * i));
  return Fnv1a(tag, Fnv1a(std::string_view(raw, 8)));
}

inline std::string HexString(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline FilterBank MakeFilterBank(const RunConfig& cfg) {
  return build_filterbank(cfg.bands, cfg.analysis.half_size(), cfg.spacing,
                          kCorpusRateHz);
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr std::string_view kModelMagic = "TMENHANCE-MODEL";
inline constexpr int kModelVersion = 1;

struct ModelFile {
  std::uint64_t fingerprint = 0;
  std::string feature_config;
  MappingModel envelope;
  MappingModel excitation;
};

struct ModelHeader {
  int version = 0;
  std::uint64_t fingerprint = 0;
  std::string line;
};

namespace detail {

class ByteWriter {
 public:
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void F64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    U64(bits);
  }
  void Array(const double* data, std::size_t n) {
    U64(n);
    for (std::size_t i = 0; i < n; ++i) F64(data[i]);
  }
  void String(std::string_view s) {
    U64(s.size());
    out_.append(s);
  }
  void Raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data) : data_(data) {}

  std::uint64_t U64() {
    Need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double F64() {
    const std::uint64_t bits = U64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::vector<double> Array(std::size_t expected) {
    const std::uint64_t n = U64();
    if (n != expected) {
      throw Error(ErrorKind::kParseError, "model file: array of " +
                                              std::to_string(n) + ", expected " +
                                              std::to_string(expected));
    }
    std::vector<double> v(n);
    for (auto& x : v) x = F64();
    return v;
  }
  std::string String() {
    const std::uint64_t n = U64();
    Need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void Need(std::uint64_t n) const {
    if (n > data_.size() - pos_) {
      throw Error(ErrorKind::kParseError, "model file is truncated");
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void WriteGmm(ByteWriter& w, const JointGmm& g) {
  w.U64(static_cast<std::uint64_t>(g.dim_x()));
  w.U64(static_cast<std::uint64_t>(g.dim_y()));
  w.Array(g.weights().data(), g.weights().size());
  for (int l = 0; l < g.size(); ++l) {
    w.Array(g.mean(l).data(), g.mean(l).size());
    w.Array(g.covariance(l).data(), g.covariance(l).size());
  }
}

inline JointGmm ReadGmm(ByteReader& r) {
  const auto dx = static_cast<int>(r.U64());
  const auto dy = static_cast<int>(r.U64());
  const std::uint64_t count = r.U64();
  const int d = dx + dy;
  if (dx < 1 || dy < 1 || d > 4096 || count == 0 || count > (1u << 20)) {
    throw Error(ErrorKind::kParseError, "model file: bad mixture header");
  }
  std::vector<double> weights(count);
  for (auto& x : weights) x = r.F64();
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (std::uint64_t l = 0; l < count; ++l) {
    const auto m = r.Array(d);
    means.push_back(Eigen::Map<const VectorXd>(m.data(), d));
    const auto c = r.Array(static_cast<std::size_t>(d) * d);
    covs.push_back(Eigen::Map<const MatrixXd>(c.data(), d, d));
  }
  return JointGmm(dx, dy, std::move(weights), std::move(means), std::move(covs));
}

inline void WriteMapping(ByteWriter& w, const MappingModel& m) {
  w.U64(static_cast<std::uint64_t>(m.meta.dim_x));
  w.U64(static_cast<std::uint64_t>(m.meta.dim_y));
  w.U64(m.meta.fingerprint);
  WriteGmm(w, m.global);
  w.U64(m.per_phone.size());
  for (const auto& [phone, g] : m.per_phone) {
    w.String(phone);
    WriteGmm(w, g);
  }
  w.U64(m.fallback.size());
  for (const auto& p : m.fallback) w.String(p);
}

inline MappingModel ReadMapping(ByteReader& r) {
  MappingModel m;
  m.meta.dim_x = static_cast<int>(r.U64());
  m.meta.dim_y = static_cast<int>(r.U64());
  m.meta.fingerprint = r.U64();
  m.global = ReadGmm(r);
  const std::uint64_t phones = r.U64();
  for (std::uint64_t i = 0; i < phones; ++i) {
    std::string name = r.String();
    m.per_phone.emplace(std::move(name), ReadGmm(r));
  }
  const std::uint64_t fallbacks = r.U64();
  for (std::uint64_t i = 0; i < fallbacks; ++i) m.fallback.push_back(r.String());
  return m;
}

}  // namespace detail

inline std::string EncodeModel(const ModelFile& model) {
  detail::ByteWriter w;
  w.Raw(std::string(kModelMagic) + " " + std::to_string(kModelVersion) + " " +
        HexString(model.fingerprint) + "\n");
  w.String(model.feature_config);
  detail::WriteMapping(w, model.envelope);
  detail::WriteMapping(w, model.excitation);
  return std::move(w.bytes());
}

inline ModelHeader ParseModelHeader(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) {
    throw Error(ErrorKind::kParseError, "model file has no header line");
  }
  ModelHeader h;
  h.line = std::string(bytes.substr(0, nl));
  std::istringstream ss(h.line);
  std::string magic, hex;
  if (!(ss >> magic >> h.version >> hex) || magic != kModelMagic ||
      hex.size() != 16) {
    throw Error(ErrorKind::kParseError, "not a model file");
  }
  h.fingerprint = std::stoull(hex, nullptr, 16);
  return h;
}

inline ModelFile DecodeModel(std::string_view bytes) {
  const ModelHeader h = ParseModelHeader(bytes);
  if (h.version != kModelVersion) {
    throw Error(ErrorKind::kConfigMismatch,
                "model file version " + std::to_string(h.version) +
                    ", this build reads version " + std::to_string(kModelVersion));
  }
  detail::ByteReader r(bytes.substr(h.line.size() + 1));
  ModelFile m;
  m.fingerprint = h.fingerprint;
  m.feature_config = r.String();
  m.envelope = detail::ReadMapping(r);
  m.excitation = detail::ReadMapping(r);
  if (!r.done()) throw Error(ErrorKind::kParseError, "trailing bytes in model file");
  return m;
}

inline std::string ReadFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void SaveModel(const fs::path& path, const ModelFile& model) {
  detail::WriteFileAtomic(path, EncodeModel(model));
}

inline ModelFile LoadModel(const fs::path& path) {
  return DecodeModel(ReadFileBytes(path));
}

inline void CheckFingerprint(const ModelFile& model, const RunConfig& cfg) {
  const std::uint64_t fp = Fingerprint(cfg);
  if (model.fingerprint != fp) {
    throw Error(ErrorKind::kConfigMismatch,
                "model fingerprint " + HexString(model.fingerprint) +
                    " does not match configuration " + HexString(fp) + " (" +
                    FeatureConfigString(cfg) + "; model: " +
                    model.feature_config + ")");
  }
}

// ---------------------------------------------------------------------------
// Utterance loading

struct LoadedUtterance {
  SampleBuffer am;
  SampleBuffer tm;
  std::optional<std::vector<PhoneSegment>> labels;
};

inline LoadedUtterance LoadUtterance(const Utterance& u) {
  LoadedUtterance out;
  out.am = read_wav(u.am_path);
  out.tm = read_wav(u.tm_path);
  if (u.label_path) {
    const double duration =
        static_cast<double>(std::max(out.am.size(), out.tm.size())) /
        out.am.rate_hz;
    out.labels = load_labels(*u.label_path, duration);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct ModelTrainingLog {
  std::string name;
  std::size_t frames = 0;
  int mixtures = 0;
  int iterations = 0;
  double log_likelihood = 0.0;
};

struct TrainReport {
  std::vector<ModelTrainingLog> models;
  std::size_t utterances = 0;
  std::size_t frames = 0;
};

namespace detail {

struct TrainingSet {
  MatrixXd data;
  std::vector<std::string> phones;
};

inline ModelTrainingLog FitOne(const std::string& name, const MatrixXd& data,
                               int dim_x, int mixtures, const RunConfig& cfg,
                               int workers, JointGmm* out) {
  const JointGmm init =
      vq_initialize(data, dim_x, mixtures, DeriveSeed(cfg.seed, name));
  EmOptions opt;
  opt.max_iter = cfg.em_max_iter;
  opt.tol = cfg.em_tolerance;
  opt.workers = workers;
  EmResult r = em_train(init, data, opt);
  *out = std::move(r.model);
  return {name, static_cast<std::size_t>(data.cols()), mixtures,
          static_cast<int>(r.log_likelihood.size()) - 1, r.log_likelihood.back()};
}

// Global model on every frame plus one model per phone that has at least
// two frames per mixture; the rest are listed as fallbacks.
inline MappingModel TrainMapping(const std::string& tag, const TrainingSet& set,
                                 int dim_x, const RunConfig& cfg,
                                 TrainReport* report) {
  const int dim_y = static_cast<int>(set.data.rows()) - dim_x;
  MappingModel m;
  m.meta = {dim_x, dim_y, Fingerprint(cfg)};
  const auto n = static_cast<std::size_t>(set.data.cols());
  if (n < 2 * static_cast<std::size_t>(cfg.mixtures_global)) {
    throw Error(ErrorKind::kInsufficientData,
                tag + " model: " + std::to_string(n) + " voiced frames, need " +
                    std::to_string(2 * cfg.mixtures_global) + " for " +
                    std::to_string(cfg.mixtures_global) + " mixtures");
  }
  report->models.push_back(FitOne(tag + "/global", set.data, dim_x,
                                   cfg.mixtures_global, cfg, cfg.workers,
                                   &m.global));

  std::map<std::string, std::vector<Eigen::Index>> by_phone;
  for (std::size_t i = 0; i < n; ++i) {
    if (!set.phones[i].empty()) {
      by_phone[set.phones[i]].push_back(static_cast<Eigen::Index>(i));
    }
  }
  std::vector<std::string> trainable;
  for (const auto& [phone, cols] : by_phone) {
    if (cols.size() >= 2 * static_cast<std::size_t>(cfg.mixtures_per_phone)) {
      trainable.push_back(phone);
    } else {
      m.fallback.push_back(phone);
    }
  }
  std::vector<JointGmm> models(trainable.size());
  std::vector<ModelTrainingLog> logs(trainable.size());
  ParallelFor(trainable.size(), cfg.workers, [&](std::size_t i) {
    const auto& cols = by_phone.at(trainable[i]);
    MatrixXd data(set.data.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      data.col(static_cast<Eigen::Index>(j)) = set.data.col(cols[j]);
    }
    logs[i] = FitOne(tag + "/" + trainable[i], data, dim_x,
                     cfg.mixtures_per_phone, cfg, 1, &models[i]);
  });
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    m.per_phone.emplace(trainable[i], std::move(models[i]));
    report->models.push_back(std::move(logs[i]));
  }
  return m;
}

}  // namespace detail

// Aligned feature tables of the Train split, in manifest order.
inline std::vector<FeatureTable> ExtractTrainingTables(const Manifest& manifest,
                                                       const RunConfig& cfg) {
  const FilterBank bank = MakeFilterBank(cfg);
  const auto idx = manifest.Indices(Split::kTrain);
  std::vector<FeatureTable> tables(idx.size());
  ParallelFor(idx.size(), cfg.workers, [&](std::size_t i) {
    const Utterance& u = manifest.entries[idx[i]];
    const LoadedUtterance lu = LoadUtterance(u);
    const auto am = ExtractFeatures(lu.am, cfg.analysis, bank);
    const auto tm = ExtractFeatures(lu.tm, cfg.analysis, bank);
    try {
      tables[i] = align_features(tm, am, lu.labels ? &*lu.labels : nullptr,
                                 cfg.analysis, lu.am.rate_hz);
    } catch (const Error& e) {
      throw Error(e.kind(), u.id + ": " + e.what());
    }
  });
  return tables;
}

inline ModelFile TrainModels(std::span<const FeatureTable> tables,
                             const RunConfig& cfg, TrainReport* report) {
  cfg.analysis.validate();
  const int p = cfg.analysis.lpc_order;
  const int B = cfg.bands;
  std::size_t n = 0;
  for (const auto& t : tables) {
    for (const auto& row : t.rows) n += row.degenerate ? 0 : 1;
  }
  detail::TrainingSet env{MatrixXd(2 * p, n), {}};
  detail::TrainingSet exc{MatrixXd(p + (B - 1) + B, n), {}};
  env.phones.reserve(n);
  std::size_t c = 0;
  for (const auto& t : tables) {
    for (const auto& row : t.rows) {
      if (row.degenerate) continue;
      const auto col = static_cast<Eigen::Index>(c++);
      for (int i = 0; i < p; ++i) {
        env.data(i, col) = row.tm_lsf[i];
        env.data(p + i, col) = row.am_lsf[i];
      }
      const int dx = static_cast<int>(row.observable.size());
      for (int i = 0; i < dx; ++i) exc.data(i, col) = row.observable[i];
      for (int i = 0; i < B; ++i) exc.data(dx + i, col) = row.tilt[i];
      env.phones.push_back(row.phone);
    }
  }
  exc.phones = env.phones;
  report->utterances = tables.size();
  report->frames = n;

  ModelFile model;
  model.fingerprint = Fingerprint(cfg);
  model.feature_config = FeatureConfigString(cfg);
  model.envelope = detail::TrainMapping("envelope", env, p, cfg, report);
  model.excitation = detail::TrainMapping("excitation", exc, p + B - 1, cfg, report);
  return model;
}

inline TrainReport cmd_train(const fs::path& manifest_path,
                             const fs::path& out_model, const RunConfig& cfg,
                             std::ostream* log = nullptr) {
  ManifestOptions opts;
  opts.analysis = cfg.analysis;
  const Manifest manifest = load_manifest(manifest_path, opts);
  const auto tables = ExtractTrainingTables(manifest, cfg);
  TrainReport report;
  const ModelFile model = TrainModels(tables, cfg, &report);
  SaveModel(out_model, model);
  if (log) {
    *log << "trained on " << report.utterances << " utterances, "
         << report.frames << " voiced frames\n";
    for (const auto& m : report.models) {
      *log << m.name << ": L=" << m.mixtures << " frames=" << m.frames
           << " iterations=" << m.iterations
           << " loglik=" << detail::FormatNumber(m.log_likelihood, "%.6f") << "\n";
    }
    for (const auto* mm : {&model.envelope, &model.excitation}) {
      if (mm->fallback.empty()) continue;
      *log << (mm == &model.envelope ? "envelope" : "excitation")
           << " phones using the global model (too few frames):";
      for (const auto& ph : mm->fallback) *log << " " << ph;
      *log << "\n";
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Enhancement

struct EnhanceResult {
  SampleBuffer audio;               // before peak normalization
  SampleBuffer excitation;          // input of the synthesis filter
  std::vector<LpcModel> envelope;   // synthesis filter per frame
  UtteranceFeatures tm;
  MappingStats stats;
};

inline std::vector<PhoneContext> ContextStream(
    const RunConfig& cfg, std::size_t frames,
    const std::vector<PhoneSegment>* labels, int rate_hz) {
  std::vector<PhoneContext> out(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    if (cfg.context == ContextSource::kGmmClassifier || !labels) {
      out[k] = {ContextSource::kGmmClassifier, std::nullopt};
    } else {
      out[k] = {cfg.context,
                PhoneAt(*labels, FrameCenterSeconds(k, cfg.analysis, rate_hz))};
    }
  }
  return out;
}

inline EnhanceResult EnhanceUtterance(const ModelFile& model,
                                      const RunConfig& cfg,
                                      const FilterBank& bank,
                                      const SampleBuffer& tm,
                                      const std::vector<PhoneSegment>* labels,
                                      SynthesisMode mode) {
  CheckFingerprint(model, cfg);
  if (NeedsLabels(cfg, mode) && !labels) {
    throw Error(ErrorKind::kMissingLabels,
                "context '" + std::string(ContextName(cfg.context)) +
                    "' needs a phone label file");
  }
  EnhanceResult r;
  r.tm = ExtractFeatures(tm, cfg.analysis, bank, MapsExcitation(mode));
  const std::size_t frames = r.tm.frames();
  const auto contexts = ContextStream(cfg, frames, labels, tm.rate_hz);

  if (MapsEnvelope(mode)) {
    r.envelope = estimate_envelope(r.tm.lpc, r.tm.lsf, model.envelope,
                                   cfg.scheme, contexts, model.fingerprint,
                                   &r.stats);
  } else {
    r.envelope = r.tm.lpc.models;
  }

  if (MapsExcitation(mode)) {
    auto& spectra = r.tm.residual_spectra;
    std::vector<MappingStats> frame_stats(frames);
    ParallelFor(frames, cfg.workers, [&](std::size_t k) {
      if (r.tm.lpc.degenerate[k]) return;
      const auto cep = excitation_cepstrum(r.tm.band_energies[k]);
      const TiltVector d = map_tilt(model.excitation, r.tm.lsf[k], cep,
                                    contexts[k], &frame_stats[k]);
      spectra[k] = apply_tilt(spectra[k], d, bank, cfg.tilt_mode);
    });
    for (const auto& s : frame_stats) r.stats.fallbacks += s.fallbacks;
    r.excitation = reconstruct_excitation(spectra, cfg.analysis, tm.size(),
                                          tm.rate_hz);
  } else {
    r.excitation = r.tm.residual;
  }
  r.audio = synthesis_filter(r.excitation, r.envelope, cfg.analysis);
  return r;
}

inline constexpr double kOutputPeakDbfs = -1.0;

inline SampleBuffer PeakNormalize(SampleBuffer buf,
                                  double peak_dbfs = kOutputPeakDbfs) {
  double peak = 0.0;
  for (double x : buf.samples) peak = std::max(peak, std::abs(x));
  if (peak > 0.0 && std::isfinite(peak)) {
    const double scale = std::pow(10.0, peak_dbfs / 20.0) / peak;
    for (double& x : buf.samples) x *= scale;
  }
  return buf;
}

inline MappingStats cmd_enhance(const fs::path& model_path,
                                const fs::path& tm_wav,
                                const std::optional<fs::path>& labels_path,
                                SynthesisMode mode, const fs::path& out_wav,
                                const RunConfig& cfg) {
  const ModelFile model = LoadModel(model_path);
  CheckFingerprint(model, cfg);
  if (NeedsLabels(cfg, mode) && !labels_path) {
    throw Error(ErrorKind::kMissingLabels,
                "context '" + std::string(ContextName(cfg.context)) +
                    "' needs --labels");
  }
  const SampleBuffer tm = read_wav(tm_wav);
  std::optional<std::vector<PhoneSegment>> labels;
  if (labels_path) {
    labels = load_labels(*labels_path,
                         static_cast<double>(tm.size()) / tm.rate_hz);
  }
  const auto r = EnhanceUtterance(model, cfg, MakeFilterBank(cfg), tm,
                                  labels ? &*labels : nullptr, mode);
  write_wav(out_wav, PeakNormalize(r.audio));
  return r.stats;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationResult {
  LsdReport lsd;
  BandDistortion band;
  std::size_t utterances = 0;
  MappingStats stats;
};

inline EvaluationResult EvaluateCorpus(const ModelFile& model,
                                       const Manifest& manifest,
                                       const RunConfig& cfg,
                                       SynthesisMode mode) {
  CheckFingerprint(model, cfg);
  const auto idx = manifest.Indices(Split::kTest);
  if (idx.empty()) throw Error(ErrorKind::kNoTestData, "test split is empty");
  if (NeedsLabels(cfg, mode)) {
    std::string missing;
    for (auto i : idx) {
      if (!manifest.entries[i].label_path) {
        missing += (missing.empty() ? "" : ", ") + manifest.entries[i].id;
      }
    }
    if (!missing.empty()) {
      throw Error(ErrorKind::kMissingLabels,
                  "context '" + std::string(ContextName(cfg.context)) +
                      "' needs labels; missing for: " + missing);
    }
  }
  const FilterBank bank = MakeFilterBank(cfg);
  std::vector<std::vector<FrameEnvelopes>> frames(idx.size());
  std::vector<BandDistortion> band(idx.size());
  std::vector<MappingStats> stats(idx.size());
  ParallelFor(idx.size(), cfg.workers, [&](std::size_t i) {
    const Utterance& u = manifest.entries[idx[i]];
    const LoadedUtterance lu = LoadUtterance(u);
    RunConfig local = cfg;
    local.workers = 1;
    const auto r = EnhanceUtterance(model, local, bank, lu.tm,
                                    lu.labels ? &*lu.labels : nullptr, mode);
    const auto am = ExtractFeatures(lu.am, cfg.analysis, bank);
    const std::size_t n = std::min(am.frames(), r.envelope.size());
    for (std::size_t k = 0; k < n; ++k) {
      if (am.lpc.degenerate[k] || r.tm.lpc.degenerate[k]) continue;
      std::string phone;
      if (lu.labels) {
        phone = PhoneAt(*lu.labels, FrameCenterSeconds(k, cfg.analysis, lu.am.rate_hz));
      }
      frames[i].push_back({am.lpc.models[k], r.envelope[k], std::move(phone)});
    }
    const std::size_t len = std::min(am.residual.size(), r.excitation.size());
    SampleBuffer ref{{am.residual.samples.begin(), am.residual.samples.begin() + len},
                     am.residual.rate_hz};
    SampleBuffer test{{r.excitation.samples.begin(), r.excitation.samples.begin() + len},
                      r.excitation.rate_hz};
    band[i] = BandDistortionStats(ref, test, cfg.analysis, bank);
    stats[i] = r.stats;
  });
  std::vector<FrameEnvelopes> all;
  EvaluationResult out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    all.insert(all.end(), frames[i].begin(), frames[i].end());
    out.band.Merge(band[i]);
    out.stats.fallbacks += stats[i].fallbacks;
  }
  out.lsd = lsd_corpus(all);
  out.utterances = idx.size();
  return out;
}

inline EvaluationResult cmd_evaluate(const fs::path& model_path,
                                     const fs::path& manifest_path,
                                     SynthesisMode mode, const RunConfig& cfg) {
  const ModelFile model = LoadModel(model_path);
  CheckFingerprint(model, cfg);
  ManifestOptions opts;
  opts.analysis = cfg.analysis;
  return EvaluateCorpus(model, load_manifest(manifest_path, opts), cfg, mode);
}

// ---------------------------------------------------------------------------
// Simulation

inline std::string SafeFileStem(std::string id) {
  for (char& c : id) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  return id;
}

// Pairs every clean AM recording with a simulated TM recording written to
// `out_dir`, and writes `out_dir/manifest.tsv`.
inline fs::path cmd_simulate(const fs::path& clean_manifest,
                             const fs::path& out_dir, const RunConfig& cfg) {
  ManifestOptions opts;
  opts.require_tm = false;
  opts.analysis = cfg.analysis;
  Manifest m = load_manifest(clean_manifest, opts);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error(ErrorKind::kIoError, "cannot create " + out_dir.string());
  }
  ParallelFor(m.entries.size(), cfg.workers, [&](std::size_t i) {
    Utterance& u = m.entries[i];
    const SampleBuffer am = read_wav(u.am_path);
    TmProfile profile = cfg.profile;
    profile.seed = DeriveSeed(cfg.seed, u.id);
    u.tm_path = fs::absolute(out_dir / (SafeFileStem(u.id) + ".tm.wav"));
    write_wav(u.tm_path, simulate_tm(am, profile));
    u.am_path = fs::absolute(u.am_path);
    if (u.label_path) u.label_path = fs::absolute(*u.label_path);
  });
  const fs::path out = out_dir / "manifest.tsv";
  write_manifest(out, m);
  return out;
}

// ---------------------------------------------------------------------------
// Inspection

inline std::string DescribeMapping(std::string_view name, const MappingModel& m) {
  std::string out = std::string(name) + ": dim_x=" + std::to_string(m.meta.dim_x) +
                    " dim_y=" + std::to_string(m.meta.dim_y) +
                    " global_mixtures=" + std::to_string(m.global.size()) +
                    " phone_models=" + std::to_string(m.per_phone.size()) + "\n";
  if (!m.per_phone.empty()) {
    out += "  phones:";
    for (const auto& [ph, g] : m.per_phone) out += " " + ph;
    out += "\n";
  }
  if (!m.fallback.empty()) {
    out += "  fallback:";
    for (const auto& ph : m.fallback) out += " " + ph;
    out += "\n";
  }
  return out;
}

inline std::string cmd_inspect(const fs::path& model_path) {
  const std::string bytes = ReadFileBytes(model_path);
  const ModelHeader h = ParseModelHeader(bytes);
  std::string out = h.line + "\n";
  out += "version: " + std::to_string(h.version) + "\n";
  out += "fingerprint: " + HexString(h.fingerprint) + "\n";
  const ModelFile m = DecodeModel(bytes);
  out += "features: " + m.feature_config + "\n";
  out += DescribeMapping("envelope", m.envelope);
  out += DescribeMapping("excitation", m.excitation);
  return out;
}

}  // namespace tmenhance
