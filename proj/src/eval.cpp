#include "cbe/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include "cbe/error.hpp"

namespace cbe {

std::vector<double> pair_similarities(const EmbeddingLookup& embeddings, const PairList& pairs) {
  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto a = embeddings.find(p.a);
    const auto b = embeddings.find(p.b);
    if (a == embeddings.end()) throw DataError("pair references unknown id '" + p.a + "'");
    if (b == embeddings.end()) throw DataError("pair references unknown id '" + p.b + "'");
    sims.push_back(cosine(a->second, b->second));
  }
  return sims;
}

VerifyResult verify_accuracy(std::span<const double> sims, const std::vector<bool>& same) {
  if (sims.size() != same.size()) throw DataError("similarity and label counts differ");
  if (sims.empty()) throw DataError("no pairs to evaluate");
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });

  // Start below every similarity: all pairs predicted "same".
  std::size_t correct = static_cast<std::size_t>(std::count(same.begin(), same.end(), true));
  VerifyResult best{static_cast<double>(correct), sims[order.front()] - 1.0, sims.size()};
  for (std::size_t i = 0; i < order.size();) {
    const double v = sims[order[i]];
    for (; i < order.size() && sims[order[i]] == v; ++i) {
      if (same[order[i]]) {
        --correct;
      } else {
        ++correct;
      }
    }
    const double t = i < order.size() ? 0.5 * (v + sims[order[i]]) : v + 1.0;
    if (static_cast<double>(correct) > best.accuracy) {
      best.accuracy = static_cast<double>(correct);
      best.threshold = t;
    }
  }
  best.accuracy /= static_cast<double>(sims.size());
  return best;
}

VerifyResult verify_accuracy(const EmbeddingLookup& embeddings, const PairList& pairs) {
  std::vector<bool> same;
  for (const auto& p : pairs) same.push_back(p.same);
  const auto sims = pair_similarities(embeddings, pairs);
  return verify_accuracy(sims, same);
}

ClassificationReport classification_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) throw DataError("prediction and label counts differ");
  if (predictions.empty()) throw DataError("no predictions to evaluate");
  ClassificationReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i]) {
      ++(labels[i] ? r.tp : r.fp);
    } else {
      ++(labels[i] ? r.fn : r.tn);
    }
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(labels.size());
  r.precision_undefined = r.tp + r.fp == 0;
  r.recall_undefined = r.tp + r.fn == 0;
  if (!r.precision_undefined) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (!r.recall_undefined) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current += static_cast<char>(std::tolower(ch));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TextScore rouge_l(const std::string& candidate, const std::string& reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return {0.0, true};
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[r.size()]);
  if (lcs == 0.0) return {0.0, false};
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return {2.0 * p * rec / (p + rec), false};
}

namespace {

constexpr std::size_t kExactSearchLimit = 20;
constexpr std::size_t kNodeBudget = 2'000'000;

// Alignment search over candidate positions left to right. `need` holds how
// many more matches each word must still receive for the alignment to be maximal.
class ChunkSearch {
 public:
  ChunkSearch(const std::vector<std::string>& cand, const std::vector<std::string>& ref) : cand_(cand), ref_(ref) {
    std::map<std::string, std::size_t> cc, rc;
    for (const auto& w : cand) ++cc[w];
    for (const auto& w : ref) ++rc[w];
    for (const auto& [w, n] : cc) {
      const auto it = rc.find(w);
      const std::size_t m = it == rc.end() ? 0 : std::min(n, it->second);
      need_[w] = m;
      matches_ += m;
    }
    left_.assign(cand.size() + 1, {});
    for (std::size_t i = cand.size(); i-- > 0;) {
      left_[i] = left_[i + 1];
      ++left_[i][cand[i]];
    }
    used_.assign(ref.size(), false);
  }

  std::size_t matches() const { return matches_; }

  std::size_t greedy() {
    auto need = need_;
    std::vector<bool> used(ref_.size(), false);
    std::size_t chunks = 0;
    std::ptrdiff_t prev = -2;
    for (std::size_t i = 0; i < cand_.size(); ++i) {
      auto& n = need[cand_[i]];
      if (n == 0) {
        prev = -2;
        continue;
      }
      std::ptrdiff_t target = -1;
      const auto next = static_cast<std::size_t>(prev + 1);
      if (prev >= 0 && next < ref_.size() && !used[next] && ref_[next] == cand_[i]) {
        target = prev + 1;
      } else {
        for (std::size_t j = 0; j < ref_.size(); ++j) {
          if (!used[j] && ref_[j] == cand_[i]) {
            target = static_cast<std::ptrdiff_t>(j);
            break;
          }
        }
      }
      if (target != prev + 1 || prev < 0) ++chunks;
      used[static_cast<std::size_t>(target)] = true;
      --n;
      prev = target;
    }
    return chunks;
  }

  std::size_t exact(std::size_t bound) {
    best_ = bound;
    nodes_ = 0;
    recurse(0, -2, 0);
    return best_;
  }

 private:
  void recurse(std::size_t i, std::ptrdiff_t prev, std::size_t chunks) {
    if (chunks >= best_ || ++nodes_ > kNodeBudget) return;
    if (i == cand_.size()) {
      best_ = chunks;
      return;
    }
    const std::string& w = cand_[i];
    auto& n = need_[w];
    if (n > 0) {
      // Extending the current chunk first finds good bounds early.
      const auto next = static_cast<std::size_t>(prev + 1);
      if (prev >= 0 && next < ref_.size() && !used_[next] && ref_[next] == w) assign(i, next, chunks, n);
      for (std::size_t j = 0; j < ref_.size(); ++j) {
        if (prev >= 0 && j == next) continue;
        if (!used_[j] && ref_[j] == w) assign(i, j, chunks + 1, n);
      }
    }
    // Skipping is allowed only if later occurrences can still supply `n` matches.
    if (left_[i + 1].contains(w) ? left_[i + 1].at(w) >= n : n == 0) recurse(i + 1, -2, chunks);
  }

  void assign(std::size_t i, std::size_t j, std::size_t chunks, std::size_t& n) {
    used_[j] = true;
    --n;
    recurse(i + 1, static_cast<std::ptrdiff_t>(j), chunks);
    ++n;
    used_[j] = false;
  }

  const std::vector<std::string>& cand_;
  const std::vector<std::string>& ref_;
  std::map<std::string, std::size_t> need_;
  std::vector<std::map<std::string, std::size_t>> left_;
  std::vector<bool> used_;
  std::size_t matches_ = 0;
  std::size_t best_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace

std::size_t meteor_chunks(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                          std::size_t* matches) {
  ChunkSearch search(candidate, reference);
  if (matches != nullptr) *matches = search.matches();
  if (search.matches() == 0) return 0;
  const std::size_t greedy = search.greedy();
  if (std::max(candidate.size(), reference.size()) > kExactSearchLimit) return greedy;
  return search.exact(greedy);
}

TextScore meteor(const std::string& candidate, const std::string& reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return {0.0, true};
  std::size_t m = 0;
  const std::size_t chunks = meteor_chunks(c, r, &m);
  if (m == 0) return {0.0, false};
  const double md = static_cast<double>(m);
  const double p = md / static_cast<double>(c.size());
  const double rec = md / static_cast<double>(r.size());
  const double f_mean = 10.0 * p * rec / (rec + 9.0 * p);
  const double frag = static_cast<double>(chunks) / md;
  const double penalty = 0.5 * frag * frag * frag;
  return {f_mean * (1.0 - penalty), false};
}

ZeroShotResult zero_shot_eval(const std::vector<std::vector<double>>& images, const Matrix& class_text,
                              std::span<const std::size_t> labels) {
  if (images.size() != labels.size()) throw DataError("image and label counts differ");
  if (images.empty()) throw DataError("no images to evaluate");
  if (class_text.rows == 0) throw DataError("no class texts");
  ZeroShotResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& x = images[i];
    if (x.size() != class_text.cols) throw ShapeError("image dimension does not match class texts");
    if (!(squared_norm(x) > 0.0)) throw NumericsError("image embedding " + std::to_string(i) + " has zero norm");
    std::size_t best = 0;
    double best_sim = cosine(x, class_text.row(0));
    for (std::size_t c = 1; c < class_text.rows; ++c) {
      const double s = cosine(x, class_text.row(c));
      if (s > best_sim) {
        best_sim = s;
        best = c;
      }
    }
    result.predictions.push_back(best);
    if (best == labels[i]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
  return result;
}

}  // namespace cbe
