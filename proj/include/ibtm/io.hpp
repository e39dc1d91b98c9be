#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ibtm/inference.hpp"
#include "ibtm/matrix.hpp"
#include "ibtm/model.hpp"

namespace ibtm {

/// Malformed input; `line` is 1-based (0 when the problem is not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a model constraint (vocabulary bounds,
/// shape mismatch against hyperparameters, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hard caps applied before any allocation sized from file contents.
inline constexpr std::size_t kMaxViews = 1024;
inline constexpr std::size_t kMaxVocab = std::size_t{1} << 31;
inline constexpr std::size_t kMaxTopics = std::size_t{1} << 16;
inline constexpr std::size_t kMaxMatrixEntries = std::size_t{1} << 28;
inline constexpr std::size_t kMaxTraceLength = std::size_t{1} << 24;

namespace detail {

/// Shortest decimal form that parses back to the same double.
inline std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// 17 significant digits.
inline std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Space-separated tokens; empty tokens (double spaces) are rejected by callers.
inline std::vector<std::string_view> tokens(std::string_view s) {
  if (s.empty()) return {};
  return split(s, ' ');
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next line without its LF; false at end of input.
  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') throw ParseError(line_no_, "CR line endings are not allowed");
    return true;
  }

  std::string require(std::string_view what) {
    std::string line;
    if (!next(line)) throw ParseError(line_no_, "unexpected end of file, expected " + std::string(what));
    return line;
  }

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path);
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& xs, char sep, Fmt fmt) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) s += sep;
    s += fmt(xs[i]);
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corpus: text, LF lines.
//
//   IBTM-CORPUS v1 D=<int> V=<int>,<int>,...
//   <doc_id> <view_id> [label=<int>] w:c w:c ...
//
// One line per (document, view); documents numbered from 0 in order, views
// from 1 in order. Word ids strictly increase within a line. A document's
// label, when present, is repeated on each of its view lines.

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  out << "IBTM-CORPUS v1 D=" << corpus.num_views() << " V="
      << detail::join(corpus.V, ',', [](std::size_t v) { return std::to_string(v); }) << '\n';
  for (std::size_t m = 0; m < corpus.docs.size(); ++m) {
    const Document& doc = corpus.docs[m];
    for (std::size_t d = 0; d < corpus.num_views(); ++d) {
      out << m << ' ' << (d + 1);
      if (doc.label) out << " label=" << *doc.label;
      for (const auto& wc : doc.views[d]) out << ' ' << wc.word << ':' << detail::format_shortest(wc.count);
      out << '\n';
    }
  }
}

inline Corpus read_corpus(std::istream& in) {
  detail::LineReader reader(in);
  const std::string header = reader.require("corpus header");
  const auto head = detail::tokens(header);
  if (head.size() != 4 || head[0] != "IBTM-CORPUS") throw ParseError(1, "not an IBTM corpus header");
  if (head[1] != "v1") throw ParseError(1, "unsupported corpus version " + std::string(head[1]));
  if (!head[2].starts_with("D=") || !head[3].starts_with("V=")) throw ParseError(1, "header must be D=<int> V=<list>");
  const auto D = detail::parse_int<std::size_t>(head[2].substr(2));
  if (!D || *D < 1 || *D > kMaxViews) throw ParseError(1, "invalid view count");
  const auto vparts = detail::split(head[3].substr(2), ',');
  if (vparts.size() != *D) throw ParseError(1, "V list length must equal D");

  Corpus corpus;
  for (auto part : vparts) {
    const auto v = detail::parse_int<std::size_t>(part);
    if (!v || *v < 2 || *v > kMaxVocab) throw ParseError(1, "invalid vocabulary size");
    corpus.V.push_back(*v);
  }

  std::string line;
  std::size_t expect_view = 0;  // zero-based view expected on the next line
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    const auto toks = detail::tokens(line);
    if (toks.size() < 2) throw ParseError(ln, "expected '<doc_id> <view_id> ...'");
    const auto doc_id = detail::parse_int<std::size_t>(toks[0]);
    const auto view_id = detail::parse_int<std::size_t>(toks[1]);
    if (!doc_id || !view_id) throw ParseError(ln, "doc and view ids must be nonnegative integers");
    const std::size_t m = corpus.docs.size() - (expect_view == 0 ? 0 : 1);
    if (*doc_id != m) throw ParseError(ln, "expected document id " + std::to_string(m));
    if (*view_id != expect_view + 1) throw ParseError(ln, "expected view id " + std::to_string(expect_view + 1));
    if (expect_view == 0) {
      corpus.docs.emplace_back();
      corpus.docs.back().views.resize(*D);
    }
    Document& doc = corpus.docs.back();

    std::size_t i = 2;
    std::optional<int> label;
    if (i < toks.size() && toks[i].starts_with("label=")) {
      label = detail::parse_int<int>(toks[i].substr(6));
      if (!label) throw ParseError(ln, "invalid label");
      ++i;
    }
    if (expect_view == 0) {
      doc.label = label;
    } else if (label != doc.label) {
      throw ParseError(ln, "label differs between views of the same document");
    }

    auto& bag = doc.views[expect_view];
    for (; i < toks.size(); ++i) {
      const auto colon = toks[i].find(':');
      if (colon == std::string_view::npos) throw ParseError(ln, "expected word:count, got '" + std::string(toks[i]) + "'");
      const auto w = detail::parse_int<std::uint32_t>(toks[i].substr(0, colon));
      const auto c = detail::parse_double(toks[i].substr(colon + 1));
      if (!w || !c) throw ParseError(ln, "malformed word:count '" + std::string(toks[i]) + "'");
      if (!(*c >= 0.0) || !std::isfinite(*c)) throw ParseError(ln, "counts must be finite and >= 0");
      if (*w >= corpus.V[expect_view]) {
        throw ValidationError("line " + std::to_string(ln) + ": word id " + std::to_string(*w) +
                              " out of vocabulary for view " + std::to_string(expect_view + 1));
      }
      if (!bag.empty() && *w <= bag.back().word) throw ParseError(ln, "word ids must strictly increase");
      bag.push_back({*w, *c});
    }
    expect_view = (expect_view + 1) % *D;
  }
  if (expect_view != 0) throw ParseError(reader.line_no(), "truncated document: missing view lines");
  if (corpus.docs.empty()) throw ValidationError("corpus has no documents");
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  auto out = detail::open_output(path);
  write_corpus(out, corpus);
  detail::finish_output(out, path);
}

inline Corpus load_corpus(const std::string& path) {
  auto in = detail::open_input(path);
  return read_corpus(in);
}

// ---------------------------------------------------------------------------
// Section-based text documents shared by the model and ground-truth formats.

namespace detail {

inline void write_row(std::ostream& out, std::span<const double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j > 0) out << ' ';
    out << format_exact(row[j]);
  }
  out << '\n';
}

inline void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << '[' << name << ' ' << m.rows() << ' ' << m.cols() << "]\n";
  for (std::size_t r = 0; r < m.rows(); ++r) write_row(out, m.row(r));
}

inline std::vector<double> read_row(LineReader& reader, std::size_t expected) {
  const std::string line = reader.require("matrix row");
  const auto toks = tokens(line);
  if (toks.size() != expected) {
    throw ParseError(reader.line_no(), "expected " + std::to_string(expected) + " values, got " +
                                           std::to_string(toks.size()));
  }
  std::vector<double> row;
  row.reserve(expected);
  for (auto t : toks) {
    const auto v = parse_double(t);
    if (!v) throw ParseError(reader.line_no(), "malformed number '" + std::string(t) + "'");
    row.push_back(*v);
  }
  return row;
}

/// Reads `[name rows cols]` and the rows, checking the declared shape
/// against the expected one before allocating.
inline Matrix read_matrix(LineReader& reader, const std::string& name, std::size_t rows, std::size_t cols) {
  const std::string header = reader.require("[" + name + "] section");
  const std::string expect = "[" + name + " " + std::to_string(rows) + " " + std::to_string(cols) + "]";
  if (header != expect) throw ParseError(reader.line_no(), "expected section header '" + expect + "'");
  if (rows * cols > kMaxMatrixEntries) throw ValidationError("matrix " + name + " exceeds size cap");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = read_row(reader, cols);
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

inline void expect_line(LineReader& reader, std::string_view expected) {
  const std::string line = reader.require(std::string(expected));
  if (line != expected) throw ParseError(reader.line_no(), "expected '" + std::string(expected) + "'");
}

/// `key v1 v2 ...` with exactly `count` values (count 0 means any >= 1).
inline std::vector<std::string_view> keyed_values(LineReader& reader, std::string_view key, const std::string& line,
                                                   std::size_t count) {
  auto toks = tokens(line);
  if (toks.empty() || toks[0] != key) throw ParseError(reader.line_no(), "expected key '" + std::string(key) + "'");
  toks.erase(toks.begin());
  if ((count == 0 && toks.empty()) || (count != 0 && toks.size() != count)) {
    throw ParseError(reader.line_no(), "wrong number of values for '" + std::string(key) + "'");
  }
  return toks;
}

inline std::vector<double> keyed_doubles(LineReader& reader, std::string_view key, std::size_t count) {
  const std::string line = reader.require(std::string(key));
  std::vector<double> out;
  for (auto t : keyed_values(reader, key, line, count)) {
    const auto v = parse_double(t);
    if (!v) throw ParseError(reader.line_no(), "malformed number '" + std::string(t) + "'");
    out.push_back(*v);
  }
  return out;
}

inline std::vector<std::size_t> keyed_sizes(LineReader& reader, std::string_view key, std::size_t count,
                                            std::size_t cap) {
  const std::string line = reader.require(std::string(key));
  std::vector<std::size_t> out;
  for (auto t : keyed_values(reader, key, line, count)) {
    const auto v = parse_int<std::size_t>(t);
    if (!v || *v > cap) throw ParseError(reader.line_no(), "invalid value for '" + std::string(key) + "'");
    out.push_back(*v);
  }
  return out;
}

inline void write_hyper(std::ostream& out, const Hyperparams& h) {
  auto sizes = [](const std::vector<std::size_t>& xs) {
    return join(xs, ' ', [](std::size_t v) { return std::to_string(v); });
  };
  auto reals = [](const std::vector<double>& xs) { return join(xs, ' ', format_exact); };
  out << "[hyper]\n";
  out << "D " << h.num_views() << '\n';
  out << "K " << h.K << '\n';
  out << "T " << sizes(h.T) << '\n';
  out << "V " << sizes(h.V) << '\n';
  out << "alpha_s " << format_exact(h.alpha_s) << '\n';
  out << "alpha_p " << reals(h.alpha_p) << '\n';
  out << "sigma_s " << reals(h.sigma_s) << '\n';
  out << "sigma_p " << reals(h.sigma_p) << '\n';
  out << "iota";
  for (const auto& b : h.iota) out << ' ' << format_exact(b.a) << ' ' << format_exact(b.b);
  out << '\n';
}

inline Hyperparams read_hyper(LineReader& reader) {
  expect_line(reader, "[hyper]");
  Hyperparams h;
  const std::size_t D = keyed_sizes(reader, "D", 1, kMaxViews).front();
  if (D < 1) throw ParseError(reader.line_no(), "D must be >= 1");
  h.K = keyed_sizes(reader, "K", 1, kMaxTopics).front();
  h.T = keyed_sizes(reader, "T", D, kMaxTopics);
  h.V = keyed_sizes(reader, "V", D, kMaxVocab);
  h.alpha_s = keyed_doubles(reader, "alpha_s", 1).front();
  h.alpha_p = keyed_doubles(reader, "alpha_p", D);
  h.sigma_s = keyed_doubles(reader, "sigma_s", D);
  h.sigma_p = keyed_doubles(reader, "sigma_p", D);
  const auto iota = keyed_doubles(reader, "iota", 2 * D);
  for (std::size_t d = 0; d < D; ++d) h.iota.push_back({iota[2 * d], iota[2 * d + 1]});
  try {
    h.validate();
  } catch (const std::domain_error& e) {
    throw ValidationError(e.what());
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model: self-describing text with named sections and 17-significant-digit
// decimals.
//
//   IBTM-MODEL v1
//   [hyper]             D, K, T, V, alpha_s, alpha_p, sigma_s, sigma_p, iota
//   [shared <d> K V_d]  K rows
//   [private <d> T_d V_d]
//   ...                 (shared then private, for d = 1..D)
//   [elbo <n>]          n lines
//   [end]

inline void write_model(std::ostream& out, const Model& model) {
  out << "IBTM-MODEL v1\n";
  detail::write_hyper(out, model.hyper);
  for (std::size_t d = 0; d < model.hyper.num_views(); ++d) {
    detail::write_matrix(out, "shared " + std::to_string(d + 1), model.globals.shared[d]);
    detail::write_matrix(out, "private " + std::to_string(d + 1), model.globals.priv[d]);
  }
  out << "[elbo " << model.elbo_trace.size() << "]\n";
  for (double v : model.elbo_trace) out << detail::format_exact(v) << '\n';
  out << "[end]\n";
}

inline Model read_model(std::istream& in) {
  detail::LineReader reader(in);
  const std::string magic = reader.require("model header");
  if (!magic.starts_with("IBTM-MODEL ")) throw ParseError(1, "not an IBTM model file");
  if (magic != "IBTM-MODEL v1") throw ParseError(1, "unsupported model version '" + magic.substr(11) + "'");
  Model model;
  model.hyper = detail::read_hyper(reader);
  const Hyperparams& h = model.hyper;
  for (std::size_t d = 0; d < h.num_views(); ++d) {
    model.globals.shared.push_back(detail::read_matrix(reader, "shared " + std::to_string(d + 1), h.K, h.V[d]));
    model.globals.priv.push_back(detail::read_matrix(reader, "private " + std::to_string(d + 1), h.T[d], h.V[d]));
  }
  for (const auto& blocks : {&model.globals.shared, &model.globals.priv}) {
    for (const auto& m : *blocks) {
      for (double v : m.data()) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("word parameters must be finite and > 0");
      }
    }
  }
  const std::string trace_header = reader.require("[elbo] section");
  if (!trace_header.starts_with("[elbo ") || !trace_header.ends_with("]")) {
    throw ParseError(reader.line_no(), "expected '[elbo <n>]'");
  }
  const auto n = detail::parse_int<std::size_t>(
      std::string_view(trace_header).substr(6, trace_header.size() - 7));
  if (!n || *n > kMaxTraceLength) throw ParseError(reader.line_no(), "invalid ELBO trace length");
  for (std::size_t i = 0; i < *n; ++i) model.elbo_trace.push_back(detail::read_row(reader, 1).front());
  detail::expect_line(reader, "[end]");
  std::string extra;
  if (reader.next(extra)) throw ParseError(reader.line_no(), "trailing content after [end]");
  return model;
}

inline void save_model(const Model& model, const std::string& path) {
  auto out = detail::open_output(path);
  write_model(out, model);
  detail::finish_output(out, path);
}

inline Model load_model(const std::string& path) {
  auto in = detail::open_input(path);
  return read_model(in);
}

// ---------------------------------------------------------------------------
// Ground truth of a synthetic corpus, same section style as the model.
//
//   IBTM-TRUTH v1
//   [dims]  D, K, M, T, V lines
//   [shared <d> K V_d] [private <d> T_d V_d]   for each view
//   [theta M K]
//   [private_props <d> M T_d] [partition <d> M 1]   for each view
//   [tokens <d> M]   M lines of word:topic pairs, for each view
//   [end]

inline void write_truth(std::ostream& out, const GroundTruth& truth) {
  const std::size_t D = truth.shared_topics.size();
  const std::size_t M = truth.theta.rows();
  out << "IBTM-TRUTH v1\n[dims]\n";
  out << "D " << D << "\nK " << truth.theta.cols() << "\nM " << M << '\n';
  out << "T";
  for (const auto& m : truth.private_topics) out << ' ' << m.rows();
  out << "\nV";
  for (const auto& m : truth.shared_topics) out << ' ' << m.cols();
  out << '\n';
  for (std::size_t d = 0; d < D; ++d) {
    detail::write_matrix(out, "shared " + std::to_string(d + 1), truth.shared_topics[d]);
    detail::write_matrix(out, "private " + std::to_string(d + 1), truth.private_topics[d]);
  }
  detail::write_matrix(out, "theta", truth.theta);
  for (std::size_t d = 0; d < D; ++d) {
    detail::write_matrix(out, "private_props " + std::to_string(d + 1), truth.private_props[d]);
    Matrix part(M, 1);
    for (std::size_t m = 0; m < M; ++m) part(m, 0) = truth.partition[d][m];
    detail::write_matrix(out, "partition " + std::to_string(d + 1), part);
  }
  for (std::size_t d = 0; d < D; ++d) {
    out << "[tokens " << (d + 1) << ' ' << M << "]\n";
    for (std::size_t m = 0; m < M; ++m) {
      const auto& toks = truth.tokens[d][m];
      for (std::size_t n = 0; n < toks.size(); ++n) {
        if (n > 0) out << ' ';
        out << toks[n].word << ':' << toks[n].topic;
      }
      out << '\n';
    }
  }
  out << "[end]\n";
}

inline GroundTruth read_truth(std::istream& in) {
  detail::LineReader reader(in);
  const std::string magic = reader.require("truth header");
  if (!magic.starts_with("IBTM-TRUTH ")) throw ParseError(1, "not an IBTM ground-truth file");
  if (magic != "IBTM-TRUTH v1") throw ParseError(1, "unsupported ground-truth version");
  detail::expect_line(reader, "[dims]");
  const std::size_t D = detail::keyed_sizes(reader, "D", 1, kMaxViews).front();
  const std::size_t K = detail::keyed_sizes(reader, "K", 1, kMaxTopics).front();
  const std::size_t M = detail::keyed_sizes(reader, "M", 1, kMaxMatrixEntries).front();
  const auto T = detail::keyed_sizes(reader, "T", D, kMaxTopics);
  const auto V = detail::keyed_sizes(reader, "V", D, kMaxVocab);
  if (D < 1 || K < 1 || M < 1) throw ValidationError("ground truth dimensions must be >= 1");

  GroundTruth truth;
  for (std::size_t d = 0; d < D; ++d) {
    truth.shared_topics.push_back(detail::read_matrix(reader, "shared " + std::to_string(d + 1), K, V[d]));
    truth.private_topics.push_back(detail::read_matrix(reader, "private " + std::to_string(d + 1), T[d], V[d]));
  }
  truth.theta = detail::read_matrix(reader, "theta", M, K);
  for (std::size_t d = 0; d < D; ++d) {
    truth.private_props.push_back(detail::read_matrix(reader, "private_props " + std::to_string(d + 1), M, T[d]));
    const Matrix part = detail::read_matrix(reader, "partition " + std::to_string(d + 1), M, 1);
    truth.partition.emplace_back(part.data().begin(), part.data().end());
  }
  truth.tokens.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    detail::expect_line(reader, "[tokens " + std::to_string(d + 1) + " " + std::to_string(M) + "]");
    truth.tokens[d].resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      const std::string line = reader.require("token line");
      for (auto t : detail::tokens(line)) {
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) throw ParseError(reader.line_no(), "expected word:topic");
        const auto w = detail::parse_int<std::uint32_t>(t.substr(0, colon));
        const auto z = detail::parse_int<std::uint32_t>(t.substr(colon + 1));
        if (!w || !z) throw ParseError(reader.line_no(), "malformed word:topic");
        if (*w >= V[d] || *z >= K + T[d]) throw ValidationError("token assignment out of range");
        truth.tokens[d][m].push_back({*w, *z});
      }
    }
  }
  detail::expect_line(reader, "[end]");
  return truth;
}

inline void save_truth(const GroundTruth& truth, const std::string& path) {
  auto out = detail::open_output(path);
  write_truth(out, truth);
  detail::finish_output(out, path);
}

inline GroundTruth load_truth(const std::string& path) {
  auto in = detail::open_input(path);
  return read_truth(in);
}

// ---------------------------------------------------------------------------
// Representation CSV: header `doc_id,label,dim_0,...,dim_{n-1}`, one row per
// document, empty label field when the document has none.

struct Representations {
  std::vector<std::size_t> doc_ids;
  std::vector<std::optional<int>> labels;
  std::vector<std::vector<double>> rows;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t dims() const noexcept { return rows.empty() ? 0 : rows.front().size(); }
};

inline void write_representations(std::ostream& out, const Representations& reps, std::size_t dims) {
  out << "doc_id,label";
  for (std::size_t j = 0; j < dims; ++j) out << ",dim_" << j;
  out << '\n';
  for (std::size_t i = 0; i < reps.rows.size(); ++i) {
    if (reps.rows[i].size() != dims) throw std::domain_error("representation rows must all have the same length");
    out << reps.doc_ids[i] << ',';
    if (reps.labels[i]) out << *reps.labels[i];
    for (double v : reps.rows[i]) out << ',' << detail::format_exact(v);
    out << '\n';
  }
}

inline Representations read_representations(std::istream& in) {
  detail::LineReader reader(in);
  const std::string header = reader.require("CSV header");
  const auto cols = detail::split(header, ',');
  if (cols.size() < 2 || cols[0] != "doc_id" || cols[1] != "label") {
    throw ParseError(1, "CSV header must start with doc_id,label");
  }
  const std::size_t dims = cols.size() - 2;
  for (std::size_t j = 0; j < dims; ++j) {
    if (cols[j + 2] != "dim_" + std::to_string(j)) throw ParseError(1, "expected column dim_" + std::to_string(j));
  }
  Representations reps;
  std::string line;
  while (reader.next(line)) {
    const auto fields = detail::split(line, ',');
    if (fields.size() != dims + 2) throw ParseError(reader.line_no(), "wrong number of CSV fields");
    const auto id = detail::parse_int<std::size_t>(fields[0]);
    if (!id) throw ParseError(reader.line_no(), "invalid doc_id");
    std::optional<int> label;
    if (!fields[1].empty()) {
      label = detail::parse_int<int>(fields[1]);
      if (!label) throw ParseError(reader.line_no(), "invalid label");
    }
    std::vector<double> row;
    for (std::size_t j = 0; j < dims; ++j) {
      const auto v = detail::parse_double(fields[j + 2]);
      if (!v) throw ParseError(reader.line_no(), "invalid value in column dim_" + std::to_string(j));
      row.push_back(*v);
    }
    reps.doc_ids.push_back(*id);
    reps.labels.push_back(label);
    reps.rows.push_back(std::move(row));
  }
  return reps;
}

inline void save_representations(const Representations& reps, std::size_t dims, const std::string& path) {
  auto out = detail::open_output(path);
  write_representations(out, reps, dims);
  detail::finish_output(out, path);
}

inline Representations load_representations(const std::string& path) {
  auto in = detail::open_input(path);
  return read_representations(in);
}

}  // namespace ibtm
