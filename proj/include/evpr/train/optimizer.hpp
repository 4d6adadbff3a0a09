#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evpr/config.hpp"
#include "evpr/core/autograd.hpp"
#include "evpr/errors.hpp"

namespace evpr::train {

/// First-order optimizer over a fixed parameter list. Plain SGD with a fixed
/// learning rate is the documented default; Adam is available as a config
/// choice. State serializes into the checkpoint.
class Optimizer {
 public:
  Optimizer(std::string kind, double learning_rate, double momentum,
            std::vector<std::pair<std::string, ag::Var>> params)
      : kind_(std::move(kind)),
        lr_(learning_rate),
        momentum_(momentum),
        params_(std::move(params)) {
    if (kind_ != "sgd" && kind_ != "adam") throw ConfigError("unknown optimizer '" + kind_ + "'");
    for (const auto& [name, p] : params_) {
      slot_m_.emplace_back(p->value.shape());
      slot_v_.emplace_back(p->value.shape());
    }
  }

  const std::string& kind() const { return kind_; }

  /// Applies one update from the gradients currently stored on the params.
  void step() {
    ++t_;
    if (kind_ == "sgd") {
      for (std::size_t i = 0; i < params_.size(); ++i) {
        ag::Var& p = params_[i].second;
        if (p->grad.size() != p->value.size()) continue;  // no gradient this round
        if (momentum_ > 0.0) {
          for (std::size_t j = 0; j < p->value.size(); ++j) {
            slot_m_[i][j] = momentum_ * slot_m_[i][j] + p->grad[j];
            p->value[j] -= lr_ * slot_m_[i][j];
          }
        } else {
          for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] -= lr_ * p->grad[j];
        }
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ag::Var& p = params_[i].second;
      if (p->grad.size() != p->value.size()) continue;
      for (std::size_t j = 0; j < p->value.size(); ++j) {
        const double g = p->grad[j];
        slot_m_[i][j] = kBeta1 * slot_m_[i][j] + (1.0 - kBeta1) * g;
        slot_v_[i][j] = kBeta2 * slot_v_[i][j] + (1.0 - kBeta2) * g * g;
        p->value[j] -= lr_ * (slot_m_[i][j] / bc1) / (std::sqrt(slot_v_[i][j] / bc2) + kEps);
      }
    }
  }

  Json state_to_json() const {
    Json slots = Json::array();
    for (std::size_t i = 0; i < params_.size(); ++i)
      slots.push_back(Json{{"name", params_[i].first},
                           {"m", slot_m_[i].vec()},
                           {"v", slot_v_[i].vec()}});
    return Json{{"kind", kind_}, {"t", t_}, {"slots", slots}};
  }

  void state_from_json(const Json& j) {
    if (j.is_null() || j.empty()) return;  // fresh state
    if (j.at("kind").get<std::string>() != kind_)
      throw DataError("optimizer state kind mismatch: checkpoint has '" +
                      j.at("kind").get<std::string>() + "', config wants '" + kind_ + "'");
    t_ = j.at("t").get<std::int64_t>();
    const Json& slots = j.at("slots");
    if (slots.size() != params_.size()) throw DataError("optimizer state size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Json& s = slots[i];
      if (s.at("name").get<std::string>() != params_[i].first)
        throw DataError("optimizer state parameter order mismatch");
      slot_m_[i].vec() = s.at("m").get<std::vector<double>>();
      slot_v_[i].vec() = s.at("v").get<std::vector<double>>();
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::string kind_;
  double lr_;
  double momentum_;
  std::int64_t t_ = 0;
  std::vector<std::pair<std::string, ag::Var>> params_;
  std::vector<ag::Tensor> slot_m_;
  std::vector<ag::Tensor> slot_v_;
};

}  // namespace evpr::train
