#include "icumort/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "icumort/error.hpp"

namespace icumort::ad {

GradCheckReport grad_check(const Tape& tape, const Bindings& inputs, const std::string& output,
                           const GradCheckOptions& options) {
  if (!(options.tolerance > 0.0)) throw ParameterError("grad_check tolerance must be positive");
  if (!(options.step > 0.0)) throw ParameterError("grad_check step must be positive");

  const std::vector<std::string> target{output};
  const Evaluation base = tape.forward(inputs, options.forward, target);
  const Gradients analytic = base.backward(output);

  Bindings probe = inputs;
  auto loss_at = [&]() { return tape.forward(probe, options.forward, target).output(output).item(); };

  GradCheckReport report;
  for (const auto& [name, grad] : analytic) {
    ParamCheck pc;
    pc.name = name;
    Tensor& param = probe.find(name)->second;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + options.step;
      const double up = loss_at();
      param[i] = saved - options.step;
      const double down = loss_at();
      param[i] = saved;

      ElementCheck ec;
      ec.index = i;
      ec.analytic = grad[i];
      ec.numeric = (up - down) / (2.0 * options.step);
      const double scale =
          std::max({std::abs(ec.analytic), std::abs(ec.numeric), options.magnitude_floor});
      ec.relative_error = std::abs(ec.analytic - ec.numeric) / scale;
      ec.pass = ec.relative_error <= options.tolerance;
      pc.pass = pc.pass && ec.pass;
      pc.max_relative_error = std::max(pc.max_relative_error, ec.relative_error);
      pc.elements.push_back(ec);
    }
    report.pass = report.pass && pc.pass;
    report.max_relative_error = std::max(report.max_relative_error, pc.max_relative_error);
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace icumort::ad
