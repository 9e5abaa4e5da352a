#include "cqr/ranking.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "cqr/text.h"

namespace cqr {

namespace {

constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "global_impression",
    "global_defect_rate",
    "user_impression",
    "user_defect_rate",
    "affinity_impression",
    "affinity_entity_impression",
    "hop",
    "unique_path_count",
    "path_impression_sum",
    "degree_difference",
    "neighborhood_jaccard_distance",
    "l1_similarity",
    "query_entity_impression",
    "query_entity_defect_rate",
    "entity_name_similarity",
    "barge_in_rate",
    "termination_rate",
};

constexpr std::size_t idx(Feature f) { return static_cast<std::size_t>(f); }

FeatureMask mask_of(std::initializer_list<Feature> fs) {
  FeatureMask m;
  for (Feature f : fs) m.set(idx(f));
  return m;
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::string_view feature_name(Feature f) { return kFeatureNames[idx(f)]; }

bool is_count_feature(Feature f) {
  switch (f) {
    case Feature::kGlobalImpression:
    case Feature::kUserImpression:
    case Feature::kAffinityImpression:
    case Feature::kAffinityEntityImpression:
    case Feature::kUniquePathCount:
    case Feature::kPathImpressionSum:
    case Feature::kDegreeDifference:
    case Feature::kQueryEntityImpression:
      return true;
    default:
      return false;
  }
}

FeatureMask all_features() { return FeatureMask().set(); }

FeatureMask similarity_only() { return mask_of({Feature::kL1Similarity}); }

FeatureMask base_features() {
  return mask_of({Feature::kL1Similarity, Feature::kGlobalImpression, Feature::kGlobalDefectRate,
                  Feature::kUserImpression, Feature::kUserDefectRate, Feature::kBargeInRate,
                  Feature::kTerminationRate});
}

FeatureMask affinity_features() {
  return mask_of({Feature::kAffinityImpression, Feature::kAffinityEntityImpression, Feature::kHop,
                  Feature::kUniquePathCount, Feature::kPathImpressionSum, Feature::kDegreeDifference,
                  Feature::kNeighborhoodJaccardDistance});
}

FeatureMask guardrail_features() {
  return mask_of({Feature::kQueryEntityImpression, Feature::kQueryEntityDefectRate,
                  Feature::kEntityNameSimilarity});
}

std::array<double, kModelDim> model_input(const FeatureVector& features, const FeatureMask& mask) {
  std::array<double, kModelDim> x{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!mask.test(i)) continue;
    const double v = features.values[i];
    x[i] = is_count_feature(static_cast<Feature>(i)) ? std::log1p(std::max(0.0, v)) : v;
    x[kNumFeatures + i] = features.present[i] ? 1.0 : 0.0;
  }
  return x;
}

FeatureExtractor::FeatureExtractor(const Fig& graph)
    : graph_(&graph), names_(graph), entity_(graph.num_entities()) {
  for (const auto& e : graph.edges()) {
    const auto& user = graph.user_id(e.user);
    for (const auto& q : e.queries) {
      const auto& text = q.effective_text();
      const double mass = static_cast<double>(q.signals.impression) * q.signals.defect_rate;
      auto& g = global_text_[text];
      g.impression += q.signals.impression;
      g.defect_mass += mass;
      auto& u = user_text_[user + '\x1f' + text];
      u.impression += q.signals.impression;
      u.defect_mass += mass;
    }
    auto& t = entity_[e.entity];
    t.impression += e.signals.impression;
    t.defect_mass += static_cast<double>(e.signals.impression) * e.signals.defect_rate;
  }
}

std::optional<NodeIndex> FeatureExtractor::query_entity(std::string_view normalized_query) const {
  return names_.longest_contained(normalized_query);
}

FeatureVector FeatureExtractor::extract(std::string_view query, const RetrievalHit& hit,
                                        std::string_view user_id) const {
  FeatureVector f;
  const auto& c = hit.candidate;
  const auto text = normalize_utterance(c.effective_text());

  auto rate = [](const Tally& t) { return t.impression > 0 ? t.defect_mass / static_cast<double>(t.impression) : 0.0; };

  Tally global;
  if (auto it = global_text_.find(text); it != global_text_.end()) global = it->second;
  f.set(Feature::kGlobalImpression, static_cast<double>(global.impression));
  f.set(Feature::kGlobalDefectRate, rate(global), global.impression > 0);

  Tally user;
  std::string key(user_id);
  key += '\x1f';
  key += text;
  if (auto it = user_text_.find(key); it != user_text_.end()) user = it->second;
  f.set(Feature::kUserImpression, static_cast<double>(user.impression));
  f.set(Feature::kUserDefectRate, rate(user), user.impression > 0);

  f.set(Feature::kHop, static_cast<double>(c.hop));
  const bool from_affinity = c.hop > 1;
  const auto& a = c.affinity;
  f.set(Feature::kAffinityImpression, from_affinity ? static_cast<double>(c.signals.impression) : 0.0,
        from_affinity);
  f.set(Feature::kAffinityEntityImpression, from_affinity ? static_cast<double>(a.affinity_impression) : 0.0,
        from_affinity);
  f.set(Feature::kUniquePathCount, from_affinity ? static_cast<double>(a.unique_path_count) : 0.0,
        from_affinity);
  f.set(Feature::kPathImpressionSum, from_affinity ? static_cast<double>(a.path_impression_sum) : 0.0,
        from_affinity);
  f.set(Feature::kDegreeDifference, from_affinity ? static_cast<double>(a.degree_difference) : 0.0,
        from_affinity);
  f.set(Feature::kNeighborhoodJaccardDistance, from_affinity ? a.neighborhood_jaccard_distance : 0.0,
        from_affinity);

  f.set(Feature::kL1Similarity, hit.similarity);

  f.set(Feature::kQueryEntityImpression, 0.0, false);
  f.set(Feature::kQueryEntityDefectRate, 0.0, false);
  f.set(Feature::kEntityNameSimilarity, 0.0, false);
  if (auto qe = names_.longest_contained(normalize_utterance(query))) {
    const auto& t = entity_[*qe];
    f.set(Feature::kQueryEntityImpression, static_cast<double>(t.impression));
    f.set(Feature::kQueryEntityDefectRate, rate(t), t.impression > 0);
    if (auto ce = graph_->find_entity(c.source_entity_id)) {
      f.set(Feature::kEntityNameSimilarity,
            token_set_jaccard(names_.normalized_name(*qe), names_.normalized_name(*ce)));
    }
  }

  f.set(Feature::kBargeInRate, c.signals.barge_in_rate);
  f.set(Feature::kTerminationRate, c.signals.termination_rate);
  return f;
}

FeatureVector extract_features(const Fig& graph, std::string_view query, const RetrievalHit& hit,
                               std::string_view user_id) {
  return FeatureExtractor(graph).extract(query, hit, user_id);
}

WeightVector default_weights() {
  WeightVector w{std::vector<double>(kModelDim, 0.0), -4.0};
  auto set = [&w](Feature f, double v) { w.weights[idx(f)] = v; };
  set(Feature::kL1Similarity, 6.0);
  set(Feature::kGlobalImpression, 0.2);
  set(Feature::kUserImpression, 0.4);
  set(Feature::kAffinityImpression, 0.2);
  set(Feature::kAffinityEntityImpression, 0.1);
  set(Feature::kGlobalDefectRate, -2.0);
  set(Feature::kUserDefectRate, -2.0);
  set(Feature::kQueryEntityDefectRate, -1.0);
  set(Feature::kBargeInRate, -1.0);
  set(Feature::kTerminationRate, -1.0);
  set(Feature::kEntityNameSimilarity, 1.0);
  return w;
}

double score(const FeatureVector& features, const WeightVector& weights) {
  if (weights.weights.size() != kModelDim) {
    throw std::invalid_argument("weight vector has " + std::to_string(weights.weights.size()) +
                                " entries, expected " + std::to_string(kModelDim));
  }
  const auto x = model_input(features);
  double z = weights.bias;
  for (std::size_t i = 0; i < kModelDim; ++i) z += weights.weights[i] * x[i];
  return logistic(z);
}

TrainResult train_scorer(const std::vector<LabeledExample>& examples, const TrainOptions& options) {
  struct Row {
    std::array<double, kModelDim> x;
    bool y;
  };
  std::vector<Row> rows;
  rows.reserve(examples.size());
  std::size_t positives = 0;
  for (const auto& ex : examples) {
    rows.push_back({model_input(ex.features, options.mask), ex.label});
    positives += ex.label ? 1 : 0;
  }
  const std::size_t n = rows.size();
  if (positives == 0 || positives == n) {
    throw std::invalid_argument("training needs at least one positive and one negative example");
  }
  // Canonical order makes every sum below independent of the input order.
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });

  const double pos_w = options.balance_classes ? static_cast<double>(n) / (2.0 * positives) : 1.0;
  const double neg_w = options.balance_classes ? static_cast<double>(n) / (2.0 * (n - positives)) : 1.0;
  double total_w = 0.0;
  for (const auto& r : rows) total_w += r.y ? pos_w : neg_w;

  std::array<double, kModelDim> mean{};
  std::array<double, kModelDim> stddev{};
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < kModelDim; ++j) mean[j] += r.x[j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < kModelDim; ++j) stddev[j] += (r.x[j] - mean[j]) * (r.x[j] - mean[j]);
  }
  std::array<bool, kModelDim> active{};
  for (std::size_t j = 0; j < kModelDim; ++j) {
    stddev[j] = std::sqrt(stddev[j] / static_cast<double>(n));
    active[j] = stddev[j] > 1e-12;
  }
  for (auto& r : rows) {
    for (std::size_t j = 0; j < kModelDim; ++j) r.x[j] = active[j] ? (r.x[j] - mean[j]) / stddev[j] : 0.0;
  }

  std::array<double, kModelDim> w{};
  double b = 0.0;
  auto objective = [&](const std::array<double, kModelDim>& ww, double bb) {
    double loss = 0.0;
    for (const auto& r : rows) {
      double z = bb;
      for (std::size_t j = 0; j < kModelDim; ++j) z += ww[j] * r.x[j];
      const double cw = r.y ? pos_w : neg_w;
      loss += cw * (r.y ? softplus(-z) : softplus(z));
    }
    double reg = 0.0;
    for (double v : ww) reg += v * v;
    return loss / total_w + 0.5 * options.l2 * reg;
  };

  TrainResult result;
  double current = objective(w, b);
  double lr = options.learning_rate;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::array<double, kModelDim> gw{};
    double gb = 0.0;
    for (const auto& r : rows) {
      double z = b;
      for (std::size_t j = 0; j < kModelDim; ++j) z += w[j] * r.x[j];
      const double cw = r.y ? pos_w : neg_w;
      const double err = cw * (logistic(z) - (r.y ? 1.0 : 0.0));
      for (std::size_t j = 0; j < kModelDim; ++j) gw[j] += err * r.x[j];
      gb += err;
    }
    for (std::size_t j = 0; j < kModelDim; ++j) gw[j] = gw[j] / total_w + options.l2 * w[j];
    gb /= total_w;

    for (int attempt = 0; attempt < 50; ++attempt) {
      std::array<double, kModelDim> nw{};
      for (std::size_t j = 0; j < kModelDim; ++j) nw[j] = w[j] - lr * gw[j];
      const double nb = b - lr * gb;
      const double next = objective(nw, nb);
      if (next <= current) {
        w = nw;
        b = nb;
        current = next;
        break;
      }
      lr *= 0.5;
    }
    result.loss_trace.push_back(current);
  }

  // Fold the standardization back into raw-input weights.
  result.weights.weights.assign(kModelDim, 0.0);
  result.weights.bias = b;
  for (std::size_t j = 0; j < kModelDim; ++j) {
    if (!active[j]) continue;
    result.weights.weights[j] = w[j] / stddev[j];
    result.weights.bias -= w[j] * mean[j] / stddev[j];
  }
  return result;
}

RewriteDecision decide(const std::vector<RetrievalHit>& hits, const std::vector<FeatureVector>& features,
                       const WeightVector& weights, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must be in (0, 1)");
  if (hits.size() != features.size()) throw std::invalid_argument("one feature vector per hit required");
  RewriteDecision d;
  d.threshold = threshold;
  if (hits.empty()) return d;

  std::size_t best = 0;
  double best_score = score(features[0], weights);
  for (std::size_t i = 1; i < hits.size(); ++i) {
    const double s = score(features[i], weights);
    const auto& a = hits[i];
    const auto& b = hits[best];
    const bool better =
        s > best_score ||
        (s == best_score &&
         std::forward_as_tuple(-a.similarity, a.candidate.effective_text(), a.candidate.utterance) <
             std::forward_as_tuple(-b.similarity, b.candidate.effective_text(), b.candidate.utterance));
    if (better) {
      best = i;
      best_score = s;
    }
  }
  d.score = best_score;
  d.winner = best;
  d.candidate = hits[best].candidate;
  d.triggered = best_score >= threshold;
  if (d.triggered) d.rewrite = hits[best].candidate.effective_text();
  return d;
}

namespace {
constexpr std::string_view kWeightsMagic = "cqr-weights 1";

std::string model_input_name(std::size_t j) {
  if (j < kNumFeatures) return std::string(kFeatureNames[j]);
  return "has_" + std::string(kFeatureNames[j - kNumFeatures]);
}
}  // namespace

void save_weights(std::ostream& out, const WeightVector& weights) {
  if (weights.weights.size() != kModelDim) throw std::invalid_argument("weight vector has wrong dimension");
  out << kWeightsMagic << '\n';
  out << "bias\t" << format_double(weights.bias) << '\n';
  for (std::size_t j = 0; j < kModelDim; ++j) {
    out << model_input_name(j) << '\t' << format_double(weights.weights[j]) << '\n';
  }
}

WeightVector load_weights(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kWeightsMagic) throw std::runtime_error("weights: bad header");
  WeightVector w;
  std::size_t expected = 0;
  bool have_bias = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 2) throw std::runtime_error("weights: bad line '" + line + "'");
    if (f[0] == "bias") {
      w.bias = parse_double(f[1]);
      have_bias = true;
      continue;
    }
    if (expected >= kModelDim || f[0] != model_input_name(expected)) {
      throw std::runtime_error("weights: unexpected feature '" + std::string(f[0]) + "'");
    }
    w.weights.push_back(parse_double(f[1]));
    ++expected;
  }
  if (!have_bias || w.weights.size() != kModelDim) throw std::runtime_error("weights: incomplete file");
  return w;
}

void save_weights_file(const std::filesystem::path& path, const WeightVector& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_weights(out, weights);
}

WeightVector load_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weights file " + path.string());
  return load_weights(in);
}

}  // namespace cqr
