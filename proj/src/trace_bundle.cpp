#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

#include "error.hpp"
#include "kvfile.hpp"
#include "toylmm.hpp"

namespace vflow::toy {
namespace {

namespace fs = std::filesystem;

constexpr const char* kFormat = "vflowopt-trace";

template <typename T>
void append_le(std::vector<char>& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
std::vector<T> decode_le(const std::vector<char>& bytes, const std::string& field,
                         std::size_t expected_count) {
  if (bytes.size() != expected_count * sizeof(T)) {
    fail(ErrorKind::io, "trace field '" + field + "': size mismatch (expected " +
                               std::to_string(expected_count * sizeof(T)) + " bytes, found " +
                               std::to_string(bytes.size()) + ")");
  }
  std::vector<T> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    char raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + i * sizeof(T), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    std::memcpy(&out[i], raw, sizeof(T));
  }
  return out;
}

std::vector<char> read_blob(const fs::path& dir, const kv::KeyValues& manifest,
                            const std::string& field) {
  const fs::path path = dir / manifest.get(field);
  if (!fs::exists(path)) {
    fail(ErrorKind::io, "trace field '" + field + "': missing file " + path.string());
  }
  return kv::read_bytes(path);
}

std::string join(const std::vector<std::size_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  return s;
}

}  // namespace

void record_trace(const FlowTrace& trace, const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t d = trace.hidden_dim();
  if (trace.attention.n != trace.visual_tokens) {
    fail(ErrorKind::shape, "record_trace: attention size differs from visual token count");
  }

  std::vector<char> attention, hidden, positions, final_token, entropy;
  for (double w : trace.attention.weights) append_le(attention, static_cast<float>(w));
  std::vector<std::size_t> seq_lens;
  for (std::size_t l = 0; l < trace.per_layer_hidden.size(); ++l) {
    const Matrix& h = trace.per_layer_hidden[l];
    if (static_cast<std::size_t>(h.cols()) != d ||
        trace.per_layer_positions[l].size() != static_cast<std::size_t>(h.rows())) {
      fail(ErrorKind::shape, "record_trace: layer " + std::to_string(l) + " is inconsistent");
    }
    seq_lens.push_back(static_cast<std::size_t>(h.rows()));
    for (Eigen::Index i = 0; i < h.size(); ++i) append_le(hidden, h.data()[i]);
    for (auto p : trace.per_layer_positions[l]) append_le(positions, p);
  }
  for (float v : trace.final_token) append_le(final_token, v);
  for (double v : trace.entropy) append_le(entropy, v);

  std::ostringstream m;
  m << "format=" << kFormat << "\n"
    << "version=1\n"
    << "hidden_dim=" << d << "\n"
    << "visual_tokens=" << trace.visual_tokens << "\n"
    << "text_tokens=" << trace.text_tokens << "\n"
    << "grid_cols=" << trace.grid_cols << "\n"
    << "grid_rows=" << trace.grid_rows << "\n"
    << "layers=" << seq_lens.size() << "\n"
    << "seq_lens=" << join(seq_lens) << "\n"
    << "attention=attention.f32\n"
    << "hidden=hidden.f32\n"
    << "positions=positions.i64\n"
    << "final_token=final.f32\n";
  if (!trace.entropy.empty()) m << "entropy=entropy.f64\n";

  kv::write_atomic(dir / "attention.f32", attention);
  kv::write_atomic(dir / "hidden.f32", hidden);
  kv::write_atomic(dir / "positions.i64", positions);
  kv::write_atomic(dir / "final.f32", final_token);
  if (!trace.entropy.empty()) kv::write_atomic(dir / "entropy.f64", entropy);
  kv::write_atomic(dir / "manifest", m.str());
}

namespace {

FlowTrace load_trace_unchecked(const fs::path& dir, std::size_t expected_hidden_dim) {
  const fs::path manifest_path = dir / "manifest";
  if (!fs::exists(manifest_path)) {
    fail(ErrorKind::io, "trace bundle: missing file " + manifest_path.string());
  }
  const auto m = kv::KeyValues::read(manifest_path);
  if (m.get("format") != kFormat) {
    fail(ErrorKind::io, "trace field 'format': expected " + std::string(kFormat));
  }
  const auto positive = [&](const std::string& field) {
    const auto v = m.get_int(field);
    if (v < 0) fail(ErrorKind::io, "trace field '" + field + "': negative value");
    return static_cast<std::size_t>(v);
  };

  FlowTrace t;
  const std::size_t d = positive("hidden_dim");
  if (expected_hidden_dim != 0 && d != expected_hidden_dim) {
    fail(ErrorKind::shape, "trace field 'hidden_dim': bundle has " + std::to_string(d) +
                               ", expected " + std::to_string(expected_hidden_dim));
  }
  t.visual_tokens = positive("visual_tokens");
  t.text_tokens = positive("text_tokens");
  t.grid_cols = static_cast<int>(positive("grid_cols"));
  t.grid_rows = static_cast<int>(positive("grid_rows"));
  if (static_cast<std::size_t>(t.grid_cols) * t.grid_rows != t.visual_tokens) {
    fail(ErrorKind::io, "trace field 'grid_cols': grid does not cover visual_tokens");
  }
  const std::size_t layers = positive("layers");
  const auto lens = m.get_int_list("seq_lens");
  if (lens.size() != layers) {
    fail(ErrorKind::io, "trace field 'seq_lens': expected " + std::to_string(layers) + " entries");
  }

  const std::size_t n = t.visual_tokens;
  const auto att = decode_le<float>(read_blob(dir, m, "attention"), "attention", n * n);
  t.attention = importance::AttentionMap(n, {att.begin(), att.end()});

  std::size_t total_rows = 0;
  for (auto len : lens) {
    if (len < 0) fail(ErrorKind::io, "trace field 'seq_lens': negative length");
    total_rows += static_cast<std::size_t>(len);
  }
  const auto hidden = decode_le<float>(read_blob(dir, m, "hidden"), "hidden", total_rows * d);
  const auto pos = decode_le<std::int64_t>(read_blob(dir, m, "positions"), "positions", total_rows);
  std::size_t row = 0;
  for (auto len : lens) {
    Matrix h(len, static_cast<Eigen::Index>(d));
    std::copy_n(hidden.begin() + static_cast<std::ptrdiff_t>(row * d), static_cast<std::size_t>(len) * d, h.data());
    t.per_layer_hidden.push_back(std::move(h));
    t.per_layer_positions.emplace_back(pos.begin() + static_cast<std::ptrdiff_t>(row),
                                       pos.begin() + static_cast<std::ptrdiff_t>(row) + len);
    row += static_cast<std::size_t>(len);
  }
  t.final_token = decode_le<float>(read_blob(dir, m, "final_token"), "final_token", d);
  if (m.has("entropy")) t.entropy = decode_le<double>(read_blob(dir, m, "entropy"), "entropy", n);

  if (!t.per_layer_hidden.empty()) {
    const Matrix& last = t.per_layer_hidden.back();
    if (last.rows() == 0 ||
        !std::equal(t.final_token.begin(), t.final_token.end(), last.row(last.rows() - 1).data())) {
      fail(ErrorKind::io, "trace field 'final_token': does not match the last hidden row");
    }
  }
  return t;
}

}  // namespace

// A malformed manifest is an I/O problem with the bundle, not a config one.
FlowTrace load_trace(const fs::path& dir, std::size_t expected_hidden_dim) {
  try {
    return load_trace_unchecked(dir, expected_hidden_dim);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::config) throw;
    fail(ErrorKind::io, "trace bundle " + dir.string() + ": " + e.what());
  }
}

ObjectiveReport trace_objective(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::io, "trace directory not found: " + dir.string());
  std::vector<fs::path> samples;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("sample_", 0) == 0) {
      samples.push_back(entry.path());
    }
  }
  std::sort(samples.begin(), samples.end());
  if (samples.empty()) fail(ErrorKind::io, "no sample_* bundles in " + dir.string());
  ObjectiveReport report;
  for (const auto& s : samples) {
    const FlowTrace full = load_trace(s / "full");
    const FlowTrace pruned = load_trace(s / "pruned", full.hidden_dim());
    report.per_sample_sim.push_back(cosine_similarity(full.final_token, pruned.final_token));
  }
  for (double v : report.per_sample_sim) report.total += v;
  return report;
}

}  // namespace vflow::toy
