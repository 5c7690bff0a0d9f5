#include "druformer/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace druformer {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local std::string g_corrupted_op;
}  // namespace

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= static_cast<size_t>(d);
    }
    return n;
}

void check_finite(const char* op_name, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(op_name) + ": non-finite value in forward output");
        }
    }
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("from_data: shape does not match data length");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw std::runtime_error("item(): tensor is not scalar");
    return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.size() != impl_->data.size()) {
        impl_->grad.assign(impl_->data.size(), 0.0);
    }
    return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.size() != impl_->data.size()) {
        throw std::runtime_error("grad(): gradient not allocated");
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
}

Tape::Tape() : prev_(g_active_tape) {
    g_active_tape = this;
}

Tape::~Tape() {
    g_active_tape = prev_;
}

Tape* Tape::active() { return g_active_tape; }

bool Tape::recording() { return g_active_tape != nullptr; }

void Tape::record(const char* op_name, Tensor output, std::function<void()> backward_fn) {
    nodes_.push_back(Node{op_name, std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar");
    }
    // Intermediates are recomputed from scratch each sweep; leaves accumulate.
    for (auto& node : nodes_) {
        node.output.zero_grad();
    }
    auto& lg = loss.impl()->grad;
    if (lg.size() != loss.impl()->data.size()) lg.assign(loss.impl()->data.size(), 0.0);
    lg[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!g_corrupted_op.empty() && g_corrupted_op == it->op_name) continue;
        it->backward_fn();
    }
}

void Tape::set_corrupted_op(std::string name) { g_corrupted_op = std::move(name); }
void Tape::clear_corrupted_op() { g_corrupted_op.clear(); }

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

RngService::RngService(uint64_t seed) : engine_(seed) {}

double RngService::uniform() {
    // 53-bit mantissa from the top bits of one engine draw.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngService::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngService::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int RngService::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
}

uint64_t RngService::next_u64() { return engine_(); }

RngService RngService::for_stream(uint64_t master_seed, uint64_t id) {
    // splitmix64 of (seed, id) so adjacent ids give unrelated streams
    uint64_t z = master_seed + 0x9e3779b97f4a7c15ULL * (id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return RngService(z);
}

std::string RngService::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void RngService::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw std::runtime_error("RngService: malformed serialized state");
}

}  // namespace druformer
