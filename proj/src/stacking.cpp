#include "linnaeus/stacking.hpp"

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

MetaFeatureVector build_meta_features(const Taxonomy& taxonomy, const TagScores& llm, const TagScores& svm) {
  const auto& top = taxonomy.top_level();
  MetaFeatureVector v;
  v.values.assign(2 * top.size(), 0.0);
  auto place = [&](const TagScores& scores, std::size_t offset, const char* block) {
    for (const auto& [tag, score] : scores) {
      if (!taxonomy.contains(tag) || taxonomy.node(tag).level != Level::top)
        throw DataError(std::string(block) + " score for '" + tag.value + "', which is not a top-level tag");
      v.values[offset + taxonomy.top_index(tag)] = score;
    }
  };
  place(llm, 0, "llm");
  place(svm, top.size(), "svm");
  return v;
}

double LinearMetaModel::decision(std::span<const double> x) const {
  double s = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x[i];
  return s;
}

double LinearMetaModel::probability(std::span<const double> x) const {
  return stub ? prior : calibration(decision(x));
}

StackedModel fit_stacking(const Matrix& meta_x, const std::vector<TagSet>& labels, std::span<const TagId> tags,
                          const StackingOptions& options) {
  if (meta_x.rows() != labels.size()) throw DataError("stacking: label rows do not match meta-feature rows");
  if (meta_x.empty()) throw DataError("stacking: no training rows");
  StackedModel model;
  model.tags.assign(tags.begin(), tags.end());
  model.width = meta_x.cols();
  model.threshold = options.threshold;
  model.models.resize(tags.size());

  SvmOptions svm_options;
  svm_options.kernel = KernelKind::linear;
  svm_options.seed = options.seed;
  const Hyperparameters params{options.c, 0.0};

  util::parallel_for(tags.size(), options.jobs, [&](std::size_t t) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i].contains(tags[t]) ? 1 : -1;
    auto fitted = fit_tag_model(tags[t], meta_x, y, params, svm_options);
    LinearMetaModel& m = model.models[t];
    m.tag = tags[t];
    m.stub = fitted.stub;
    m.prior = fitted.prior;
    m.weights.assign(meta_x.cols(), 0.0);
    if (!fitted.stub) {
      // Collapse the dual expansion into a primal weight vector.
      const auto& sv = fitted.svm.support_vectors;
      for (std::size_t i = 0; i < sv.rows(); ++i)
        for (std::size_t c = 0; c < sv.cols(); ++c) m.weights[c] += fitted.svm.coef[i] * sv(i, c);
      m.bias = -fitted.svm.rho;
      m.calibration = fitted.calibration;
    }
  });
  return model;
}

StackedPrediction stacked_predict(const StackedModel& model, std::span<const double> meta) {
  if (meta.size() != model.width)
    throw DataError("stacking: meta-feature length " + std::to_string(meta.size()) + ", expected " +
                    std::to_string(model.width));
  StackedPrediction out;
  for (const auto& m : model.models) {
    const double p = m.probability(meta);
    out.probabilities[m.tag] = p;
    if (p >= model.threshold) out.tags.insert(m.tag);
  }
  return out;
}

nlohmann::ordered_json StackedModel::to_json() const {
  nlohmann::ordered_json j;
  j["width"] = width;
  j["threshold"] = threshold;
  auto& arr = j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : models) {
    nlohmann::ordered_json t;
    t["tag"] = m.tag.value;
    t["stub"] = m.stub;
    t["prior"] = m.prior;
    t["weights"] = m.weights;
    t["bias"] = m.bias;
    t["calibration"] = {{"a", m.calibration.a}, {"b", m.calibration.b}};
    arr.push_back(std::move(t));
  }
  return j;
}

StackedModel StackedModel::from_json(const nlohmann::json& j) {
  try {
    StackedModel s;
    s.width = j.at("width").get<std::size_t>();
    s.threshold = j.at("threshold").get<double>();
    for (const auto& t : j.at("models")) {
      LinearMetaModel m;
      m.tag = TagId(t.at("tag").get<std::string>());
      m.stub = t.at("stub").get<bool>();
      m.prior = t.at("prior").get<double>();
      m.weights = t.at("weights").get<std::vector<double>>();
      m.bias = t.at("bias").get<double>();
      m.calibration.a = t.at("calibration").at("a").get<double>();
      m.calibration.b = t.at("calibration").at("b").get<double>();
      if (m.weights.size() != s.width) throw DataError("stacking model: weight length mismatch");
      s.tags.push_back(m.tag);
      s.models.push_back(std::move(m));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("stacking model: ") + e.what());
  }
}

}  // namespace linnaeus
