#include "mmasr/parameters.hpp"

#include <cmath>

#include "mmasr/errors.hpp"

namespace mmasr {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::audio_encoder: return "audio_encoder";
    case Component::visual_encoder: return "visual_encoder";
    case Component::fusion: return "fusion";
    case Component::decoder: return "decoder";
  }
  return "unknown";
}

Component parse_component(std::string_view name) {
  for (Component c : kAllComponents)
    if (to_string(c) == name) return c;
  throw ParameterError("unknown component '" + std::string(name) + "'");
}

template <typename Scalar>
Parameter<Scalar>& ParameterSet<Scalar>::add(std::string name, Component component,
                                             Matrix<Scalar> value) {
  if (index_.count(name)) throw ParameterError("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter<Scalar>>(
      Parameter<Scalar>{std::move(name), std::move(value), component, true}));
  return *params_.back();
}

template <typename Scalar>
Parameter<Scalar>* ParameterSet<Scalar>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename Scalar>
const Parameter<Scalar>* ParameterSet<Scalar>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename Scalar>
Parameter<Scalar>& ParameterSet<Scalar>::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ParameterError("no parameter named " + std::string(name));
}

template <typename Scalar>
const Parameter<Scalar>& ParameterSet<Scalar>::at(std::string_view name) const {
  if (auto* p = find(name)) return *p;
  throw ParameterError("no parameter named " + std::string(name));
}

template <typename Scalar>
void ParameterSet<Scalar>::set_trainable(Component component, bool trainable) {
  for (auto& p : params_)
    if (p->component == component) p->trainable = trainable;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::trainable_count(Component component) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable && p->component == component) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::scalar_count(Component component) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->component == component) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename Scalar>
Matrix<Scalar> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
Matrix<Scalar> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
Matrix<Scalar> he_normal(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  return normal_init<Scalar>(rows, cols, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Matrix<float> xavier_uniform<float>(Eigen::Index, Eigen::Index, Rng&);
template Matrix<double> xavier_uniform<double>(Eigen::Index, Eigen::Index, Rng&);
template Matrix<float> normal_init<float>(Eigen::Index, Eigen::Index, double, Rng&);
template Matrix<double> normal_init<double>(Eigen::Index, Eigen::Index, double, Rng&);
template Matrix<float> he_normal<float>(Eigen::Index, Eigen::Index, Eigen::Index, Rng&);
template Matrix<double> he_normal<double>(Eigen::Index, Eigen::Index, Eigen::Index, Rng&);

}  // namespace mmasr
