#include "stpc/segnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "stpc/error.hpp"
#include "stpc/ops.hpp"

namespace stpc {

// ---- configuration ----

NetworkConfig NetworkConfig::full_scale() {
    NetworkConfig c;
    c.num_stages = 5;
    c.widths = {32, 64, 128, 256, 512};
    return c;
}

void NetworkConfig::validate() const {
    if (num_classes == 0) throw ConfigError("classes", "must be at least 1");
    if (num_stages == 0) throw ConfigError("stages", "must be at least 1");
    if (widths.size() != num_stages)
        throw ConfigError("widths", "expected " + std::to_string(num_stages) + " entries, got " + std::to_string(widths.size()));
    for (auto w : widths)
        if (w == 0) throw ConfigError("widths", "every width must be at least 1");
    if (neighbors == 0) throw ConfigError("k", "must be at least 1");
    if (atoms == 0) throw ConfigError("atoms", "must be at least 1");
    if (atom_dim == 0) throw ConfigError("atom-dim", "must be at least 1");
    if (ratio == 0) throw ConfigError("ratio", "must be at least 1");
    if (head_width == 0) throw ConfigError("head-width", "must be at least 1");
    if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("tau", "must lie in [0, 1)");
    if (!(lambda_dict >= 0.0)) throw ConfigError("lambda-dict", "must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr-decay", "must lie in (0, 1]");
    if (!(dict_lr_scale > 0.0)) throw ConfigError("dict-lr-scale", "must be > 0");
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <typename T>
T parse_value(const std::string& key, std::string_view s) {
    T v{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(key, "cannot parse '" + std::string(s) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::size_t> parse_widths(std::string_view s) {
    std::vector<std::size_t> out;
    while (!s.empty()) {
        const auto comma = s.find(',');
        out.push_back(parse_value<std::size_t>("widths", trim(s.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

}  // namespace

std::string NetworkConfig::to_text() const {
    std::ostringstream os;
    std::string w;
    for (std::size_t i = 0; i < widths.size(); ++i) w += (i ? "," : "") + std::to_string(widths[i]);
    os << "channels = " << input_channels << '\n'
       << "classes = " << num_classes << '\n'
       << "stages = " << num_stages << '\n'
       << "widths = " << w << '\n'
       << "k = " << neighbors << '\n'
       << "atoms = " << atoms << '\n'
       << "atom-dim = " << atom_dim << '\n'
       << "tau = " << fmt_double(tau) << '\n'
       << "ratio = " << ratio << '\n'
       << "lambda-dict = " << fmt_double(lambda_dict) << '\n'
       << "lr = " << fmt_double(lr) << '\n'
       << "lr-decay = " << fmt_double(lr_decay) << '\n'
       << "dict-lr-scale = " << fmt_double(dict_lr_scale) << '\n'
       << "epochs = " << epochs << '\n'
       << "seed = " << seed << '\n'
       << "head-width = " << head_width << '\n'
       << "aggregation = " << to_string(aggregation) << '\n'
       << "feature-input = " << to_string(feature_input) << '\n';
    return os.str();
}

NetworkConfig NetworkConfig::from_text(std::string_view text) {
    NetworkConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view l = trim(line);
        if (l.empty() || l.front() == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string_view::npos) throw ConfigError(std::string(l), "expected 'key = value'");
        const std::string key(trim(l.substr(0, eq)));
        const std::string_view val = trim(l.substr(eq + 1));
        if (key == "channels") c.input_channels = parse_value<std::size_t>(key, val);
        else if (key == "classes") c.num_classes = parse_value<std::size_t>(key, val);
        else if (key == "stages") c.num_stages = parse_value<std::size_t>(key, val);
        else if (key == "widths") c.widths = parse_widths(val);
        else if (key == "k") c.neighbors = parse_value<std::size_t>(key, val);
        else if (key == "atoms") c.atoms = parse_value<std::size_t>(key, val);
        else if (key == "atom-dim") c.atom_dim = parse_value<std::size_t>(key, val);
        else if (key == "tau") c.tau = parse_value<double>(key, val);
        else if (key == "ratio") c.ratio = parse_value<std::size_t>(key, val);
        else if (key == "lambda-dict") c.lambda_dict = parse_value<double>(key, val);
        else if (key == "lr") c.lr = parse_value<double>(key, val);
        else if (key == "lr-decay") c.lr_decay = parse_value<double>(key, val);
        else if (key == "dict-lr-scale") c.dict_lr_scale = parse_value<double>(key, val);
        else if (key == "epochs") c.epochs = parse_value<std::size_t>(key, val);
        else if (key == "seed") c.seed = parse_value<std::uint64_t>(key, val);
        else if (key == "head-width") c.head_width = parse_value<std::size_t>(key, val);
        else if (key == "aggregation") {
            try {
                c.aggregation = parse_aggregation(val);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(key, e.what());
            }
        } else if (key == "feature-input") {
            try {
                c.feature_input = parse_feature_input(val);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(key, e.what());
            }
        } else
            throw ConfigError(key, "unknown key");
    }
    c.validate();
    return c;
}

// ---- model ----

std::vector<NamedTensor> SegModel::parameters() const {
    std::vector<NamedTensor> out;
    if (initial_atoms.defined()) out.push_back({"dictionary.atoms", initial_atoms});
    for (std::size_t s = 0; s < encoder.size(); ++s) {
        const std::string p = "encoder." + std::to_string(s);
        encoder[s].layer.collect(p, out);
        encoder[s].norm.collect(p + ".norm", out);
    }
    for (std::size_t s = 0; s < decoder.size(); ++s) decoder[s].collect("decoder." + std::to_string(s), out);
    head_hidden.collect("head.hidden", out);
    head_out.collect("head.output", out);
    return out;
}

namespace {

bool is_dictionary_param(const std::string& name) {
    return name == "dictionary.atoms" || name.find(".update_map.") != std::string::npos;
}

}  // namespace

std::vector<NamedTensor> SegModel::dictionary_parameters() const {
    std::vector<NamedTensor> out;
    for (auto& p : parameters())
        if (is_dictionary_param(p.name)) out.push_back(p);
    return out;
}

std::vector<NamedTensor> SegModel::network_parameters() const {
    std::vector<NamedTensor> out;
    for (auto& p : parameters())
        if (!is_dictionary_param(p.name)) out.push_back(p);
    return out;
}

std::size_t SegModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

SegModel build_model(const NetworkConfig& config) { return build_model(config, config.seed); }

SegModel build_model(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    const ParamInit init(seed);
    const bool aniso = config.aggregation == Aggregation::Anisotropic;
    SegModel model;
    model.config = config;
    if (aniso) model.initial_atoms = initial_atoms(init, config.atoms, config.atom_dim);

    std::size_t in_width = config.input_channels;
    for (std::size_t s = 0; s < config.num_stages; ++s) {
        const std::string name = "encoder." + std::to_string(s);
        const std::size_t w = config.widths[s];
        EncoderStage stage;
        stage.layer.feature_map = init.perceptron(name + ".feature_map", 3 + in_width, w, true);
        std::size_t slots = 1;
        if (aniso) {
            stage.layer.spatial_map = init.perceptron(name + ".spatial_map", 3, config.atom_dim, false);
            stage.layer.update_map = init.perceptron(name + ".update_map", config.atom_dim, config.atom_dim, false);
            slots = config.atoms;
        } else if (config.aggregation == Aggregation::Unordered) {
            slots = config.neighbors;
        }
        stage.layer.conv_weight =
            init.normal(name + ".conv.weight", {slots, w, w}, std::sqrt(2.0 / static_cast<double>(slots * w)));
        stage.layer.conv_bias = ad::Tensor::zeros({w}, true);
        stage.norm = init.affine(w);
        model.encoder.push_back(std::move(stage));
        in_width = w;
    }
    for (std::size_t s = 0; s + 1 < config.num_stages; ++s) {
        model.decoder.push_back(init.linear("decoder." + std::to_string(s), config.widths[s + 1] + config.widths[s],
                                            config.widths[s]));
    }
    model.head_hidden = init.linear("head.hidden", config.widths[0], config.head_width);
    model.head_out = init.linear("head.output", config.head_width, config.num_classes);
    return model;
}

// ---- forward / loss ----

ForwardResult forward(const SegModel& model, const PointCloud& cloud, std::uint64_t sample_seed) {
    const NetworkConfig& cfg = model.config;
    if (cloud.size() == 0) throw std::invalid_argument("forward: empty point cloud");
    if (cloud.channels != cfg.input_channels) {
        throw ShapeError("forward: cloud has " + std::to_string(cloud.channels) + " attribute channels, model expects " +
                         std::to_string(cfg.input_channels));
    }
    const double slope = 0.2;
    const StpcOptions opts{cfg.tau, 1e-12, cfg.feature_input};

    ForwardResult result;
    std::vector<std::vector<Vec3>> levels{cloud.coords};
    std::vector<ad::Tensor> skips;
    ad::Tensor feats;
    if (cloud.channels > 0) feats = ad::Tensor({cloud.size(), cloud.channels}, cloud.attrs);
    ad::Tensor atoms = model.initial_atoms;

    for (std::size_t s = 0; s < cfg.num_stages; ++s) {
        const auto& coords = levels[s];
        const std::size_t n = coords.size();
        const NeighborIndex nbr = knn(coords, std::min(cfg.neighbors, n));
        const LayerInput input{coords, feats};
        const auto& stage = model.encoder[s];
        ad::Tensor h;
        if (cfg.aggregation == Aggregation::Anisotropic) {
            StpcOutput out = stpc_layer_forward(input, nbr, stage.layer, atoms, opts);
            h = std::move(out.features);
            atoms = std::move(out.atoms);
            result.decorrelation.push_back(std::move(out.decorrelation));
            result.coefficients.push_back(std::move(out.coefficients));
        } else {
            h = isotropic_aggregate(input, nbr, cfg.aggregation, stage.layer.feature_map, stage.layer.conv_weight,
                                    stage.layer.conv_bias, cfg.feature_input);
        }
        h = ad::leaky_relu(stage.norm(h), slope);
        skips.push_back(h);
        if (s + 1 < cfg.num_stages) {
            const auto sel = random_subsample(n, cfg.ratio, mix_seed(sample_seed, s));
            levels.push_back(select(coords, sel));
            feats = ad::gather_rows(h, sel);
        }
    }

    ad::Tensor x = skips.back();
    for (std::size_t s = cfg.num_stages - 1; s-- > 0;) {
        const auto map = nearest_upsample(levels[s + 1], levels[s]);
        const ad::Tensor up = ad::gather_rows(x, map);
        x = ad::leaky_relu(model.decoder[s](ad::concat_last({up, skips[s]})), slope);
    }
    result.logits = model.head_out(ad::leaky_relu(model.head_hidden(x), slope));
    return result;
}

ad::Tensor segmentation_loss(const ad::Tensor& logits, std::span<const int> labels,
                             std::span<const ad::Tensor> decorrelation, double lambda_dict, int ignore_label) {
    ad::Tensor loss = ad::cross_entropy(logits, labels, ignore_label);
    if (lambda_dict == 0.0 || decorrelation.empty()) return loss;
    ad::Tensor reg = decorrelation[0];
    for (std::size_t i = 1; i < decorrelation.size(); ++i) reg = ad::add(reg, decorrelation[i]);
    return ad::add(loss, ad::scale(reg, lambda_dict));
}

std::vector<int> argmax_rows(const ad::Tensor& logits) {
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(n);
    const auto d = logits.data();
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = d.subspan(i * c, c);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double learning_rate(const NetworkConfig& config, std::size_t epoch) {
    return config.lr * std::pow(config.lr_decay, static_cast<double>(epoch));
}

DatasetSplit split_dataset(std::vector<PointCloud> clouds) {
    DatasetSplit split;
    for (std::size_t i = 0; i < clouds.size(); ++i)
        (i % 5 == 4 ? split.held_out : split.train).push_back(std::move(clouds[i]));
    return split;
}

std::string format_epoch_record(const EpochRecord& r) {
    std::ostringstream os;
    os << std::setprecision(17) << "epoch=" << r.epoch << " lr=" << r.lr << " loss=" << r.loss;
    if (r.held_out)
        os << " oa=" << r.held_out->oa << " macc=" << r.held_out->macc << " miou=" << r.held_out->miou;
    else
        os << " oa=nan macc=nan miou=nan";
    return os.str();
}

// ---- training / evaluation ----

TrainState make_train_state(const NetworkConfig& config) { return TrainState{build_model(config), {}, {}, 0}; }

namespace {

std::vector<ad::Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<ad::Tensor> out;
    for (const auto& n : named) out.push_back(n.tensor);
    return out;
}

void check_labels(std::span<const PointCloud> clouds, std::size_t classes) {
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        const auto& c = clouds[i];
        if (!c.has_labels()) throw std::invalid_argument("cloud " + std::to_string(i) + " has no labels");
        for (int l : c.labels)
            if (l < 0 || static_cast<std::size_t>(l) >= classes)
                throw std::invalid_argument("cloud " + std::to_string(i) + " has label " + std::to_string(l) +
                                            " outside [0, " + std::to_string(classes) + ")");
    }
}

}  // namespace

void train(TrainState& state, std::span<const PointCloud> train_set, std::span<const PointCloud> held_out,
           std::size_t until_epoch, const std::function<void(const EpochRecord&)>& on_epoch) {
    const NetworkConfig& cfg = state.model.config;
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    check_labels(train_set, cfg.num_classes);
    check_labels(held_out, cfg.num_classes);

    auto network = tensors_of(state.model.network_parameters());
    auto dictionary = tensors_of(state.model.dictionary_parameters());
    std::vector<std::size_t> order(train_set.size());

    for (std::size_t epoch = state.epochs_done; epoch < until_epoch; ++epoch) {
        const double lr = learning_rate(cfg, epoch);
        const std::uint64_t epoch_seed = mix_seed(cfg.seed, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(epoch_seed);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (std::size_t idx : order) {
            const PointCloud& cloud = train_set[idx];
            ad::zero_grads(network);
            ad::zero_grads(dictionary);
            ad::Tape::current().clear();
            const ForwardResult fr = forward(state.model, cloud, mix_seed(epoch_seed, idx + 1));
            const ad::Tensor loss = segmentation_loss(fr.logits, cloud.labels, fr.decorrelation, cfg.lambda_dict);
            loss_sum += loss.item();
            ad::backward(loss);
            ad::adam_step(network, state.network_opt, lr);
            if (!dictionary.empty()) ad::adam_step(dictionary, state.dictionary_opt, lr * cfg.dict_lr_scale);
        }
        state.epochs_done = epoch + 1;

        EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(train_set.size()), std::nullopt};
        if (!held_out.empty()) rec.held_out = evaluate(state.model, held_out);
        if (on_epoch) on_epoch(rec);
    }
}

std::uint64_t eval_sample_seed(const NetworkConfig& config, std::size_t cloud_index) {
    return mix_seed(config.seed ^ 0xe7a1ULL, cloud_index);
}

std::vector<int> predict(const SegModel& model, const PointCloud& cloud, std::uint64_t sample_seed) {
    ad::NoGradGuard guard;
    return argmax_rows(forward(model, cloud, sample_seed).logits);
}

ConfusionMatrix confusion(const SegModel& model, std::span<const PointCloud> clouds) {
    ConfusionMatrix cm(model.config.num_classes);
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        const auto pred = predict(model, clouds[i], eval_sample_seed(model.config, i));
        cm.accumulate(clouds[i].labels, pred);
    }
    return cm;
}

Metrics evaluate(const SegModel& model, std::span<const PointCloud> clouds) {
    check_labels(clouds, model.config.num_classes);
    return compute_metrics(confusion(model, clouds));
}

}  // namespace stpc
