#include "bnnlv/checkpoint.hpp"

#include <json.hpp>
#include <stdexcept>

#include "bnnlv/util.hpp"

namespace bnnlv {

using nlohmann::json;

namespace {

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vector_from(const json& a) {
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

PosteriorEnsemble Checkpoint::prediction_ensemble(int m_draws, RngStream& rng) const {
  if (ensemble) return *ensemble;
  if (factorized) return posterior_to_ensemble(model, *factorized, m_draws, rng);
  throw std::runtime_error("checkpoint holds no posterior");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j;
  j["format"] = "bnnlv-checkpoint";
  j["version"] = 1;
  json m;
  m["layer_sizes"] = ckpt.model.net.layer_sizes();
  m["gamma_z"] = ckpt.model.gamma_z;
  m["lambda_w"] = ckpt.model.lambda_w;
  m["noise_variance"] = to_json(ckpt.model.noise_variance);
  j["model"] = m;
  if (ckpt.factorized) {
    json q;
    q["m_w"] = to_json(ckpt.factorized->m_w);
    q["v_w"] = to_json(ckpt.factorized->v_w);
    q["m_z"] = to_json(ckpt.factorized->m_z);
    q["v_z"] = to_json(ckpt.factorized->v_z);
    q["noise_log_variance"] = to_json(ckpt.factorized->noise_log_variance);
    j["factorized"] = q;
  }
  if (ckpt.ensemble) {
    json e;
    e["provenance"] =
        ckpt.ensemble->provenance == PosteriorEnsemble::Provenance::hmc ? "hmc" : "variational";
    json samples = json::array();
    for (const auto& w : ckpt.ensemble->weight_samples) samples.push_back(to_json(w));
    e["weight_samples"] = samples;
    if (!ckpt.ensemble->noise_variances.empty()) {
      json noise = json::array();
      for (const auto& s : ckpt.ensemble->noise_variances) noise.push_back(to_json(s));
      e["noise_variances"] = noise;
    }
    j["ensemble"] = e;
  }
  j["meta"] = ckpt.meta;
  util::write_file(path, j.dump(1));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json j = json::parse(util::read_file(path));
  if (j.value("format", "") != "bnnlv-checkpoint") {
    throw std::runtime_error("not a bnnlv checkpoint: " + path.string());
  }
  const json& m = j.at("model");
  BnnLvModel model(nn::DenseNet(m.at("layer_sizes").get<std::vector<int>>()),
                   m.at("gamma_z").get<double>(), m.at("lambda_w").get<double>(),
                   vector_from(m.at("noise_variance")));
  Checkpoint out{std::move(model), std::nullopt, std::nullopt, j.value("meta", "")};
  if (j.contains("factorized")) {
    const json& q = j.at("factorized");
    FactorizedGaussianPosterior fp;
    fp.m_w = vector_from(q.at("m_w"));
    fp.v_w = vector_from(q.at("v_w"));
    fp.m_z = vector_from(q.at("m_z"));
    fp.v_z = vector_from(q.at("v_z"));
    fp.noise_log_variance = vector_from(q.at("noise_log_variance"));
    out.factorized = std::move(fp);
  }
  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    PosteriorEnsemble pe;
    pe.provenance = e.at("provenance").get<std::string>() == "hmc"
                        ? PosteriorEnsemble::Provenance::hmc
                        : PosteriorEnsemble::Provenance::variational;
    for (const auto& w : e.at("weight_samples")) pe.weight_samples.push_back(vector_from(w));
    if (e.contains("noise_variances")) {
      for (const auto& s : e.at("noise_variances")) pe.noise_variances.push_back(vector_from(s));
    }
    out.ensemble = std::move(pe);
  }
  return out;
}

}  // namespace bnnlv
