#include "topokd/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "topokd/rng.hpp"

namespace topokd::net {

void NetworkConfig::validate() const {
    if (depths.empty() || depths.size() != channels.size())
        throw std::invalid_argument("depths and channels must be non-empty and the same length");
    for (int d : depths)
        if (d < 1) throw std::invalid_argument("stage depth must be >= 1");
    for (int c : channels)
        if (c < 1) throw std::invalid_argument("stage channels must be >= 1");
    if (k < 1) throw std::invalid_argument("neighborhood size must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
}

NetworkConfig NetworkConfig::teacher_desk(int num_classes) {
    NetworkConfig cfg;
    cfg.depths = {1, 1, 1, 2, 1};
    cfg.channels = {8, 16, 32, 64, 128};
    cfg.k = 8;
    cfg.num_classes = num_classes;
    return cfg;
}

NetworkConfig NetworkConfig::student_desk(int num_classes) {
    NetworkConfig cfg;
    cfg.depths = {1, 1, 1, 1, 1};
    cfg.channels = {4, 4, 8, 16, 32};
    cfg.k = 8;
    cfg.num_classes = num_classes;
    return cfg;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(std::stoi(part));
    return out;
}

}  // namespace

std::string NetworkConfig::to_text() const {
    std::string s;
    s += "depths = " + join_ints(depths) + "\n";
    s += "channels = " + join_ints(channels) + "\n";
    s += "k = " + std::to_string(k) + "\n";
    s += "num_classes = " + std::to_string(num_classes) + "\n";
    s += "seed = " + std::to_string(seed) + "\n";
    s += "use_intensity = " + std::string(use_intensity ? "true" : "false") + "\n";
    return s;
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
    NetworkConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string v) {
            const auto a = v.find_first_not_of(" \t");
            const auto b = v.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "depths") cfg.depths = split_ints(val);
        else if (key == "channels") cfg.channels = split_ints(val);
        else if (key == "k") cfg.k = std::stoi(val);
        else if (key == "num_classes") cfg.num_classes = std::stoi(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "use_intensity") cfg.use_intensity = val == "true";
    }
    cfg.validate();
    return cfg;
}

Network Network::init(const NetworkConfig& cfg) {
    cfg.validate();
    Network net;
    net.cfg_ = cfg;
    std::mt19937_64 g(rng::substream(cfg.seed, 0x9e7ULL));

    auto make_block = [&](int in, int out) {
        ad::Matrix w(in, out);
        const double scale = std::sqrt(1.0 / in);
        for (double& v : w.data) v = rng::normal(g) * scale;
        net.weights_.push_back(std::move(w));
        net.biases_.emplace_back(1, out, 0.0);
    };

    int in = cfg.input_dim();
    for (int s = 0; s < cfg.num_stages(); ++s) {
        for (int b = 0; b < cfg.depths[s]; ++b) {
            make_block(in, cfg.channels[s]);
            in = cfg.channels[s];
        }
    }
    make_block(in, cfg.num_classes);  // logits head
    return net;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights_) n += w.size();
    for (const auto& b : biases_) n += b.size();
    return n;
}

std::size_t expected_parameter_count(const NetworkConfig& cfg) {
    std::size_t n = 0;
    int in = cfg.input_dim();
    for (std::size_t s = 0; s < cfg.depths.size(); ++s)
        for (int b = 0; b < cfg.depths[s]; ++b) {
            n += static_cast<std::size_t>(in) * cfg.channels[s] + cfg.channels[s];
            in = cfg.channels[s];
        }
    n += static_cast<std::size_t>(in) * cfg.num_classes + cfg.num_classes;
    return n;
}

void Network::gradient_step(const std::vector<ad::Matrix>& grad_w,
                            const std::vector<ad::Matrix>& grad_b, double lr) {
    if (grad_w.size() != weights_.size() || grad_b.size() != biases_.size())
        throw std::invalid_argument("gradient/parameter layout mismatch");
    for (std::size_t i = 0; i < weights_.size(); ++i)
        for (std::size_t k = 0; k < weights_[i].size(); ++k) weights_[i].data[k] -= lr * grad_w[i].data[k];
    for (std::size_t i = 0; i < biases_.size(); ++i)
        for (std::size_t k = 0; k < biases_[i].size(); ++k) biases_[i].data[k] -= lr * grad_b[i].data[k];
}

namespace {

// Row-stochastic aggregation operator: symmetric kNN (i~j if either selects
// the other) plus self, mean-weighted.
ad::Matrix knn_mean_matrix(const pc::PointCloud& cloud, int k, bool& clamped) {
    const int n = static_cast<int>(cloud.size());
    int keff = k;
    if (keff > n - 1) {
        keff = n - 1;
        clamped = true;
    }
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0;
            for (int a = 0; a < 3; ++a) {
                const double d = cloud.coords[i][a] - cloud.coords[j][a];
                s += d * d;
            }
            order.emplace_back(s, j);
        }
        std::sort(order.begin(), order.end());
        for (int t = 0; t < keff; ++t) {
            adj[i][order[t].second] = 1;
            adj[order[t].second][i] = 1;
        }
    }

    ad::Matrix A(n, n);
    for (int i = 0; i < n; ++i) {
        int deg = 1;
        for (int j = 0; j < n; ++j) deg += adj[i][j];
        const double w = 1.0 / deg;
        A.at(i, i) = w;
        for (int j = 0; j < n; ++j)
            if (adj[i][j]) A.at(i, j) = w;
    }
    return A;
}

ad::Matrix input_features(const pc::PointCloud& cloud, bool use_intensity) {
    const int n = static_cast<int>(cloud.size());
    ad::Matrix X(n, use_intensity ? 4 : 3);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) X.at(i, a) = cloud.coords[i][a];
        if (use_intensity) X.at(i, 3) = cloud.has_intensity() ? cloud.intensity[i] : 0.0;
    }
    return X;
}

}  // namespace

ForwardTrace forward(const Network& net, const pc::PointCloud& cloud) {
    cloud.validate();
    const NetworkConfig& cfg = net.config();
    const int n = static_cast<int>(cloud.size());

    ForwardTrace trace;
    trace.graph = std::make_shared<ad::Graph>();
    trace.n_points = n;
    ad::Graph& g = *trace.graph;

    bool clamped = false;
    const ad::Graph::Id aggregate =
        n > 1 ? g.constant(knn_mean_matrix(cloud, cfg.k, clamped)) : -1;
    if (clamped) {
        trace.k_clamped = true;
        std::fprintf(stderr, "[net] neighborhood clamped to %d for %d-point cloud\n", n - 1, n);
    }

    ad::Graph::Id h = g.constant(input_features(cloud, cfg.use_intensity));
    std::size_t block = 0;
    for (int s = 0; s < cfg.num_stages(); ++s) {
        for (int d = 0; d < cfg.depths[s]; ++d) {
            const ad::Graph::Id w = g.param(net.weights()[block], "w" + std::to_string(block));
            const ad::Graph::Id b = g.param(net.biases()[block], "b" + std::to_string(block));
            trace.weight_ids.push_back(w);
            trace.bias_ids.push_back(b);
            h = g.tanh(g.add(g.matmul(h, w), b));
            ++block;
        }
        if (aggregate >= 0) h = g.matmul(aggregate, h);
        trace.stage_features.push_back(h);
    }
    const ad::Graph::Id w = g.param(net.weights()[block], "w_head");
    const ad::Graph::Id b = g.param(net.biases()[block], "b_head");
    trace.weight_ids.push_back(w);
    trace.bias_ids.push_back(b);
    trace.logits = g.add(g.matmul(h, w), b);
    g.forward(trace.logits);
    return trace;
}

ad::Matrix ForwardTrace::feature_values(int stage) const {
    return graph->value(stage_features.at(stage));
}

ad::Matrix ForwardTrace::logit_values() const { return graph->value(logits); }

ad::Graph::Id task_loss(ForwardTrace& trace, const std::vector<int>& labels) {
    ad::Graph& g = *trace.graph;
    const int n = g.rows(trace.logits);
    const int k = g.cols(trace.logits);
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("label count mismatch");
    ad::Matrix onehot(n, k);
    for (int i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) throw std::invalid_argument("label out of range");
        onehot.at(i, labels[i]) = 1.0;
    }
    const ad::Graph::Id picked = g.sum(g.mul(g.log_softmax(trace.logits), g.constant(std::move(onehot))));
    const ad::Graph::Id loss = g.scale(picked, -1.0 / n);
    g.forward(loss);
    return loss;
}

std::vector<ad::Matrix> activation_gradients(ForwardTrace& trace, ad::Graph::Id loss) {
    ad::Graph& g = *trace.graph;
    g.forward(loss);
    g.backward(loss);
    std::vector<ad::Matrix> grads;
    grads.reserve(trace.stage_features.size());
    for (const ad::Graph::Id f : trace.stage_features) grads.push_back(g.adjoint(f));
    return grads;
}

ParamGradients parameter_gradients(ForwardTrace& trace, ad::Graph::Id loss) {
    ad::Graph& g = *trace.graph;
    g.forward(loss);
    g.backward(loss);
    ParamGradients pg;
    for (const ad::Graph::Id w : trace.weight_ids) pg.weights.push_back(g.adjoint(w));
    for (const ad::Graph::Id b : trace.bias_ids) pg.biases.push_back(g.adjoint(b));
    return pg;
}

double ParamGradients::norm() const {
    double s = 0;
    for (const auto& m : weights)
        for (double v : m.data) s += v * v;
    for (const auto& m : biases)
        for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

std::vector<int> pair_stages(int student_stages, int teacher_stages) {
    std::vector<int> map(student_stages, 0);
    for (int i = 0; i < student_stages; ++i) {
        const double pos = static_cast<double>(i) * teacher_stages / student_stages;
        map[i] = std::min(teacher_stages - 1, static_cast<int>(std::lround(pos)));
    }
    return map;
}

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'K', 'D', 'C', 'K', 'P', 'T', '1'};

}

void Network::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::string cfg = cfg_.to_text();
    const std::uint64_t cfg_len = cfg.size();
    f.write(reinterpret_cast<const char*>(&cfg_len), sizeof cfg_len);
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    std::uint64_t count = 0;
    for (const auto& w : weights_) count += w.size();
    for (const auto& b : biases_) count += b.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto& w : weights_)
        f.write(reinterpret_cast<const char*>(w.data.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    for (const auto& b : biases_)
        f.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Network Network::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t cfg_len = 0;
    f.read(reinterpret_cast<char*>(&cfg_len), sizeof cfg_len);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    const NetworkConfig cfg = NetworkConfig::from_text(cfg_text);

    Network net = Network::init(cfg);  // allocates the right shapes
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof count);
    if (count != net.parameter_count()) throw std::runtime_error("checkpoint parameter count mismatch");
    for (auto& w : net.weights_)
        f.read(reinterpret_cast<char*>(w.data.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    for (auto& b : net.biases_)
        f.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint truncated: " + path);
    return net;
}

}  // namespace topokd::net
