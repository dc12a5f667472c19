#include <darkisp/grad_check.hpp>

#include <cmath>
#include <cstdint>

namespace darkisp {

namespace {

// deterministic weights for the scalar projection, independent of input data
double probe_weight(std::size_t i) {
    std::uint64_t z = (i + 1) * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    // weights in [0.25, 1.25) keep every output path visible
    return 0.25 + static_cast<double>(z >> 11) * 0x1.0p-53;
}

double scalar_of(const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
                 const std::vector<Tensor>& inputs, Graph** out_graph,
                 Tensor* out_scalar) {
    Graph g;
    Tensor y = f(g, inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < y->numel(); ++i)
        acc += probe_weight(i) * y->value[i];
    if (out_scalar) {
        // build the projection inside the graph so backward sees it
        std::vector<double> w(y->numel());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = probe_weight(i);
        Tensor wt = make_tensor(y->shape, std::move(w));
        Tensor s = g.sum(g.mul(y, wt));
        g.backward(s);
        *out_scalar = s;
    }
    (void)out_graph;
    return acc;
}

}  // namespace

GradCheckReport grad_check(
    const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double epsilon, double tolerance) {
    GradCheckReport report;

    // analytic pass
    for (auto& t : inputs) t->zero_grad();
    Tensor s;
    scalar_of(f, inputs, nullptr, &s);

    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) {
        t->ensure_grad();
        analytic.push_back(t->grad);
    }

    // central differences per element
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor t = inputs[ti];
        double worst = 0.0;
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double saved = t->value[i];
            t->value[i] = saved + epsilon;
            const double fp = scalar_of(f, inputs, nullptr, nullptr);
            t->value[i] = saved - epsilon;
            const double fm = scalar_of(f, inputs, nullptr, nullptr);
            t->value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = analytic[ti][i];
            const double denom =
                std::max({std::fabs(a), std::fabs(numeric), 1e-4});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
        report.max_rel_err_per_input.push_back(worst);
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace darkisp
