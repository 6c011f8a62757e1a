#ifndef DGSR_OPTIM_HPP
#define DGSR_OPTIM_HPP

#include "dgsr/layers.hpp"

#include <cstdint>
#include <vector>

namespace dgsr {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over one ParameterSet. Moment buffers follow the set's registration
/// order, so a set and its optimizer must be created together.
template <typename Scalar>
class Adam {
 public:
  Adam(ParameterSet<Scalar>& params, AdamOptions options);

  /// One update from the gradients currently accumulated on the set.
  void step();
  void zero_grad() { params_->zero_grad(); }

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return steps_; }

  // Checkpoint access.
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }
  void set_step_count(std::int64_t s) { steps_ = s; }

 private:
  ParameterSet<Scalar>* params_;
  AdamOptions options_;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
  std::int64_t steps_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dgsr

#endif  // DGSR_OPTIM_HPP
