#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/text.hpp"

namespace provoc {

struct EditOps {
  long distance = 0;
  long substitutions = 0, insertions = 0, deletions = 0;
};

// Levenshtein with unit costs and an operation-count backtrace. Ties prefer
// match/substitution, then deletion, then insertion, so counts are stable.
template <typename Seq>
EditOps edit_distance(const Seq& ref, const Seq& hyp) {
  const size_t R = ref.size(), H = hyp.size();
  std::vector<long> dp((R + 1) * (H + 1));
  auto at = [&](size_t i, size_t j) -> long& { return dp[i * (H + 1) + j]; };
  for (size_t i = 0; i <= R; ++i) at(i, 0) = static_cast<long>(i);
  for (size_t j = 0; j <= H; ++j) at(0, j) = static_cast<long>(j);
  for (size_t i = 1; i <= R; ++i)
    for (size_t j = 1; j <= H; ++j) {
      const long sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  EditOps ops;
  ops.distance = at(R, H);
  size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (!(ref[i - 1] == hyp[j - 1])) ++ops.substitutions;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

inline EditOps edit_distance(const std::string& ref, const std::string& hyp) {
  return edit_distance(std::vector<char>(ref.begin(), ref.end()),
                       std::vector<char>(hyp.begin(), hyp.end()));
}

// WER tokenization: lowercase, punctuation stripped except apostrophes,
// whitespace split. The recognizer-side normalization is not observable, so
// this fixed local convention stands in for it.
inline std::vector<std::string> wer_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

struct ErrorRateReport {
  double cer = 0.0, wer = 0.0;
  EditOps char_ops, word_ops;
  long ref_chars = 0, ref_words = 0;
};

// CER over normalized characters, WER over whitespace-split word tokens.
inline ErrorRateReport error_rates(const std::string& ref, const std::string& hyp) {
  const std::string nref = normalize_text(ref), nhyp = normalize_text(hyp);
  const auto wref = wer_tokens(ref), whyp = wer_tokens(hyp);
  check(!nref.empty() && !wref.empty(), "error rate undefined: empty reference transcript");
  ErrorRateReport r;
  r.char_ops = edit_distance(nref, nhyp);
  r.word_ops = edit_distance(wref, whyp);
  r.ref_chars = static_cast<long>(nref.size());
  r.ref_words = static_cast<long>(wref.size());
  r.cer = static_cast<double>(r.char_ops.distance) / static_cast<double>(r.ref_chars);
  r.wer = static_cast<double>(r.word_ops.distance) / static_cast<double>(r.ref_words);
  return r;
}

// ---- MOS reporting ----

struct Rating {
  std::string listener, utterance, system, target, axis;
  double score = 0.0;
};

inline std::vector<Rating> read_ratings_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  check(!lines.empty(), "ratings file ", path, " is empty");
  check(lines[0] == "listener_id,utterance_id,system_id,target_speaker,axis,score",
        "ratings file ", path, " must start with the listener_id,...,score header");
  std::vector<Rating> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv_split(lines[i]);
    check(f.size() == 6, "ratings file ", path, " line ", i + 1, " has ", f.size(), " fields");
    Rating r{f[0], f[1], f[2], f[3], f[4], 0.0};
    check(r.axis == "naturalness" || r.axis == "similarity", "ratings file ", path, " line ",
          i + 1, ": axis must be naturalness or similarity, got ", f[4]);
    try {
      r.score = std::stod(f[5]);
    } catch (const std::exception&) {
      fail("ratings file ", path, " line ", i + 1, ": bad score ", f[5]);
    }
    check(r.score >= 1.0 && r.score <= 5.0, "ratings file ", path, " line ", i + 1,
          ": score ", r.score, " outside [1, 5]");
    out.push_back(std::move(r));
  }
  check(!out.empty(), "ratings file ", path, " holds no ratings");
  return out;
}

struct MosCell {
  std::string system, target, axis;  // target "(all)" for the pooled row
  int n = 0;
  double mean = 0.0, half_width = 0.0;
  bool half_width_defined = false;  // false when n == 1
};

// mean and 95% half-width 1.96 * s / sqrt(n), sample stdev with n-1.
inline MosCell mos_cell(const std::vector<double>& scores) {
  check(!scores.empty(), "mos cell must be nonempty");
  MosCell c;
  c.n = static_cast<int>(scores.size());
  for (double s : scores) c.mean += s;
  c.mean /= c.n;
  if (c.n > 1) {
    double sq = 0.0;
    for (double s : scores) sq += (s - c.mean) * (s - c.mean);
    const double stdev = std::sqrt(sq / (c.n - 1));
    c.half_width = 1.96 * stdev / std::sqrt(static_cast<double>(c.n));
    c.half_width_defined = true;
  }
  return c;
}

inline std::string format_mos(const MosCell& c) {
  char buf[64];
  if (c.half_width_defined)
    std::snprintf(buf, sizeof(buf), "%.3f±%.3f", c.mean, c.half_width);
  else
    std::snprintf(buf, sizeof(buf), "%.3f±n/a", c.mean);
  return buf;
}

// Cells grouped by system x target x axis, plus a pooled "(all)" target per
// system x axis. Sorted by axis, then target, then system.
inline std::vector<MosCell> mos_cells(const std::vector<Rating>& ratings) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : ratings) {
    groups[{r.axis, r.target, r.system}].push_back(r.score);
    groups[{r.axis, "(all)", r.system}].push_back(r.score);
  }
  std::vector<MosCell> cells;
  for (const auto& [key, scores] : groups) {
    MosCell c = mos_cell(scores);
    c.axis = std::get<0>(key);
    c.target = std::get<1>(key);
    c.system = std::get<2>(key);
    cells.push_back(std::move(c));
  }
  return cells;
}

// Table-3 layout: one block per axis, targets as rows, systems as columns.
inline std::string mos_table_text(const std::vector<MosCell>& cells) {
  std::vector<std::string> axes, targets, systems;
  for (const auto& c : cells) {
    if (std::find(axes.begin(), axes.end(), c.axis) == axes.end()) axes.push_back(c.axis);
    if (std::find(targets.begin(), targets.end(), c.target) == targets.end())
      targets.push_back(c.target);
    if (std::find(systems.begin(), systems.end(), c.system) == systems.end())
      systems.push_back(c.system);
  }
  size_t width = 12;
  for (const auto& s : systems) width = std::max(width, s.size() + 2);
  for (const auto& t : targets) width = std::max(width, t.size() + 2);
  auto pad = [&](const std::string& s) {
    return s + std::string(s.size() < width ? width - s.size() : 1, ' ');
  };
  std::string out;
  for (const auto& axis : axes) {
    out += axis + "\n";
    out += pad("target");
    for (const auto& s : systems) out += pad(s);
    out += "\n";
    for (const auto& t : targets) {
      out += pad(t);
      for (const auto& s : systems) {
        std::string cell = "-";
        for (const auto& c : cells)
          if (c.axis == axis && c.target == t && c.system == s) cell = format_mos(c);
        out += pad(cell);
      }
      out += "\n";
    }
  }
  return out;
}

inline std::string mos_table_csv(const std::vector<MosCell>& cells) {
  std::string out = "axis,target,system,n,mean,half_width\n";
  char buf[128];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,", c.n, c.mean);
    out += csv_escape(c.axis) + "," + csv_escape(c.target) + "," + csv_escape(c.system) + ",";
    out += buf;
    if (c.half_width_defined) {
      std::snprintf(buf, sizeof(buf), "%.6f", c.half_width);
      out += buf;
    } else {
      out += "n/a";
    }
    out += "\n";
  }
  return out;
}

// ---- code projection ----

struct Projection {
  std::vector<double> points;  // n x 2 row-major
  bool degenerate = false;     // all-identical input collapses to the origin
};

// Principal-component projection onto the top two components with a fixed sign
// convention: each loading's largest-magnitude entry is made positive.
inline Projection project_codes(const std::vector<double>& codes, int n, int dim) {
  check(n >= 3, "projection needs at least 3 codes, got ", n);
  check(dim >= 2, "projection needs dimension >= 2");
  check(codes.size() == static_cast<size_t>(n) * dim, "code matrix size mismatch");
  Eigen::MatrixXd X(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) X(i, d) = codes[static_cast<size_t>(i) * dim + d];
  Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  Projection proj;
  proj.points.assign(static_cast<size_t>(n) * 2, 0.0);
  Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  check(es.info() == Eigen::Success, "eigendecomposition failed");
  if (es.eigenvalues()(dim - 1) <= 1e-18) {
    proj.degenerate = true;  // rank-zero spread: every point sits at the origin
    return proj;
  }
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(dim - 1 - c);
    int arg = 0;
    for (int d = 1; d < dim; ++d)
      if (std::abs(v(d)) > std::abs(v(arg))) arg = d;
    if (v(arg) < 0.0) v = -v;
    Eigen::VectorXd y = X * v;
    for (int i = 0; i < n; ++i) proj.points[static_cast<size_t>(i) * 2 + c] = y(i);
  }
  return proj;
}

// Exact O(n^2) t-SNE for small code sets; seeded init, fixed iteration count.
inline Projection tsne_codes(const std::vector<double>& codes, int n, int dim, uint64_t seed,
                             int iters = 500, double perplexity = 15.0) {
  check(n >= 3, "projection needs at least 3 codes, got ", n);
  check(codes.size() == static_cast<size_t>(n) * dim, "code matrix size mismatch");
  perplexity = std::min(perplexity, (n - 1) / 3.0);
  std::vector<double> d2(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = codes[static_cast<size_t>(i) * dim + d] -
                            codes[static_cast<size_t>(j) * dim + d];
        s += diff * diff;
      }
      d2[static_cast<size_t>(i) * n + j] = s;
    }
  // per-point bandwidth via binary search on perplexity
  std::vector<double> P(static_cast<size_t>(n) * n, 0.0);
  const double log_perp = std::log(perplexity);
  for (int i = 0; i < n; ++i) {
    double lo = 1e-20, hi = 1e20, beta = 1.0;
    for (int it = 0; it < 64; ++it) {
      double sum = 0.0, h = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double p = std::exp(-beta * d2[static_cast<size_t>(i) * n + j]);
        sum += p;
        h += beta * d2[static_cast<size_t>(i) * n + j] * p;
      }
      if (sum <= 0.0) break;
      const double entropy = std::log(sum) + h / sum;
      if (entropy > log_perp) lo = beta; else hi = beta;
      beta = (hi >= 1e20 || lo <= 1e-20) ? beta * (entropy > log_perp ? 2.0 : 0.5)
                                         : 0.5 * (lo + hi);
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) sum += std::exp(-beta * d2[static_cast<size_t>(i) * n + j]);
    for (int j = 0; j < n; ++j)
      if (j != i && sum > 0.0)
        P[static_cast<size_t>(i) * n + j] = std::exp(-beta * d2[static_cast<size_t>(i) * n + j]) / sum;
  }
  // symmetrize
  double psum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = 0.5 * (P[static_cast<size_t>(i) * n + j] + P[static_cast<size_t>(j) * n + i]);
      P[static_cast<size_t>(i) * n + j] = v;
      psum += v;
    }
  for (auto& v : P) v = std::max(v / std::max(psum, 1e-300), 1e-12);

  Rng rng(seed);
  std::vector<double> Y(static_cast<size_t>(n) * 2), G(static_cast<size_t>(n) * 2, 0.0),
      mom(static_cast<size_t>(n) * 2, 0.0);
  for (auto& v : Y) v = 1e-4 * rng.normal();
  for (int it = 0; it < iters; ++it) {
    const double exag = it < 100 ? 4.0 : 1.0;
    std::vector<double> Q(static_cast<size_t>(n) * n, 0.0);
    double qsum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dy0 = Y[i * 2] - Y[j * 2], dy1 = Y[i * 2 + 1] - Y[j * 2 + 1];
        const double q = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
        Q[static_cast<size_t>(i) * n + j] = q;
        qsum += q;
      }
    std::fill(G.begin(), G.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = Q[static_cast<size_t>(i) * n + j];
        const double coef =
            4.0 * (exag * P[static_cast<size_t>(i) * n + j] - q / qsum) * q;
        G[i * 2] += coef * (Y[i * 2] - Y[j * 2]);
        G[i * 2 + 1] += coef * (Y[i * 2 + 1] - Y[j * 2 + 1]);
      }
    const double alpha = it < 250 ? 0.5 : 0.8;
    for (size_t k = 0; k < Y.size(); ++k) {
      mom[k] = alpha * mom[k] - 100.0 * G[k];
      Y[k] += mom[k];
    }
  }
  Projection proj;
  proj.points = std::move(Y);
  return proj;
}

// k-nearest-neighbor speaker-mixing score: 1 when same-speaker neighbor
// fraction matches chance (perfect mixing), 0 when neighborhoods are pure.
inline double mixing_score(const std::vector<double>& codes, int n, int dim,
                           const std::vector<int>& labels, int k = 5) {
  check(n == static_cast<int>(labels.size()), "labels size mismatch");
  check(codes.size() == static_cast<size_t>(n) * dim, "code matrix size mismatch");
  std::map<int, int> counts;
  for (int l : labels) counts[l]++;
  check(counts.size() >= 2, "mixing score needs at least 2 speakers");
  for (const auto& [l, c] : counts)
    check(c >= 5, "mixing score needs at least 5 codes per speaker; speaker ", l, " has ", c);
  check(n > k, "mixing score needs more than k+1 codes");

  double same_fraction = 0.0;
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = codes[static_cast<size_t>(i) * dim + d] -
                            codes[static_cast<size_t>(j) * dim + d];
        s += diff * diff;
      }
      dist[j] = {s, j};
    }
    dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
    std::sort(dist.begin(), dist.end());
    int same = 0;
    for (int j = 0; j < k; ++j)
      if (labels[dist[j].second] == labels[i]) ++same;
    same_fraction += static_cast<double>(same) / k;
  }
  same_fraction /= n;

  double chance = 0.0;
  for (const auto& [l, c] : counts)
    chance += (static_cast<double>(c) / n) * (static_cast<double>(c - 1) / (n - 1));
  const double score = (1.0 - same_fraction) / (1.0 - chance);
  return std::clamp(score, 0.0, 1.0);
}

// ---- code CSV (utterance_id, speaker_id, c0..c{D-1}) ----

struct CodeRow {
  std::string utterance, speaker;
  std::vector<double> code;
};

inline void write_codes_csv(const std::string& path, const std::vector<CodeRow>& rows, int dim) {
  std::string out = "utterance_id,speaker_id";
  for (int d = 0; d < dim; ++d) out += ",c" + std::to_string(d);
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    check(static_cast<int>(r.code.size()) == dim, "code row ", r.utterance, " has ",
          r.code.size(), " values, expected ", dim);
    out += csv_escape(r.utterance) + "," + csv_escape(r.speaker);
    for (double v : r.code) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  write_text_file(path, out);
}

inline std::vector<CodeRow> read_codes_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  check(lines.size() >= 2, "codes file ", path, " has no rows");
  const auto header = csv_split(lines[0]);
  check(header.size() >= 3 && header[0] == "utterance_id" && header[1] == "speaker_id",
        "codes file ", path, " must start with utterance_id,speaker_id,c0,...");
  const int dim = static_cast<int>(header.size()) - 2;
  std::vector<CodeRow> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv_split(lines[i]);
    check(f.size() == header.size(), "codes file ", path, " line ", i + 1, " has ", f.size(),
          " fields, expected ", header.size());
    CodeRow r{f[0], f[1], {}};
    r.code.reserve(dim);
    for (int d = 0; d < dim; ++d) {
      try {
        r.code.push_back(std::stod(f[2 + d]));
      } catch (const std::exception&) {
        fail("codes file ", path, " line ", i + 1, ": bad value ", f[2 + d]);
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace provoc
