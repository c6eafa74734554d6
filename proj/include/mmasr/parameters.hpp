#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace mmasr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

// Freeze / initialization groups of a multimodal model.
enum class Component : std::uint8_t { audio_encoder = 0, visual_encoder = 1, fusion = 2, decoder = 3 };

inline constexpr Component kAllComponents[] = {Component::audio_encoder, Component::visual_encoder,
                                               Component::fusion, Component::decoder};

std::string_view to_string(Component c);
Component parse_component(std::string_view name);

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Component component = Component::decoder;
  bool trainable = true;
};

// Owns parameters at stable addresses; iteration follows insertion order.
template <typename Scalar>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<Scalar>& add(std::string name, Component component, Matrix<Scalar> value);

  Parameter<Scalar>* find(std::string_view name);
  const Parameter<Scalar>* find(std::string_view name) const;
  Parameter<Scalar>& at(std::string_view name);
  const Parameter<Scalar>& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void set_trainable(Component component, bool trainable);
  // Number of trainable scalars, optionally restricted to one component.
  std::size_t trainable_count() const;
  std::size_t trainable_count(Component component) const;
  std::size_t scalar_count(Component component) const;

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
Matrix<Scalar> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
template <typename Scalar>
Matrix<Scalar> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
// He-normal for a conv/linear weight with the given fan-in.
template <typename Scalar>
Matrix<Scalar> he_normal(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

}  // namespace mmasr
