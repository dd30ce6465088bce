#pragma once

#include "morsedef/fields.hpp"

#include <utility>

namespace morsedef::detail {

// Adapts a kernel exposing
//   template <class Real> Real evaluate(std::span<const Real>, std::span<Real> grad) const
// (grad empty means value only) to the virtual ScalarField interface.
template <class Kernel>
class KernelField final : public ScalarField {
  public:
    KernelField(Kernel kernel, std::shared_ptr<const SingularSet> sigma, std::string name,
                std::string note)
        : kernel_(std::move(kernel)), sigma_(std::move(sigma)), name_(std::move(name)),
          note_(std::move(note)) {}

    std::size_t dimension() const override { return kernel_.dimension(); }
    std::string name() const override { return name_; }
    std::string domain_note() const override { return note_; }
    const SingularSet& singular_set() const override { return *sigma_; }

    double value(std::span<const double> x) const override {
        require_dimension(x.size(), dimension(), "value");
        return kernel_.template evaluate<double>(x, {});
    }
    double value_and_gradient(std::span<const double> x, std::span<double> grad) const override {
        require_dimension(x.size(), dimension(), "value_and_gradient");
        require_dimension(grad.size(), dimension(), "gradient buffer");
        return kernel_.template evaluate<double>(x, grad);
    }
    Extended value(std::span<const Extended> x) const override {
        require_dimension(x.size(), dimension(), "value");
        return kernel_.template evaluate<Extended>(x, {});
    }
    Extended value_and_gradient(std::span<const Extended> x,
                                std::span<Extended> grad) const override {
        require_dimension(x.size(), dimension(), "value_and_gradient");
        require_dimension(grad.size(), dimension(), "gradient buffer");
        return kernel_.template evaluate<Extended>(x, grad);
    }

    const Kernel& kernel() const { return kernel_; }

  private:
    Kernel kernel_;
    std::shared_ptr<const SingularSet> sigma_;
    std::string name_;
    std::string note_;
};

}  // namespace morsedef::detail
