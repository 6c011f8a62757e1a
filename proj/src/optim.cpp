#include "dgsr/optim.hpp"

#include <cmath>

namespace dgsr {

template <typename Scalar>
Adam<Scalar>::Adam(ParameterSet<Scalar>& params, AdamOptions options)
    : params_(&params), options_(options) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.second.shape());
    v_.emplace_back(e.second.shape());
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, double(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, double(steps_));
  const Scalar b1 = Scalar(options_.beta1), b2 = Scalar(options_.beta2);
  const Scalar lr = Scalar(options_.learning_rate / bc1);
  const Scalar inv_bc2 = Scalar(1.0 / bc2);
  const Scalar eps = Scalar(options_.epsilon);
  auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].second;
    if (!p.has_grad()) continue;
    const auto& g = p.grad().data();
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p.mutable_value().data() -= lr * m / ((v * inv_bc2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dgsr
