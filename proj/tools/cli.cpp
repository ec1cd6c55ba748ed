#include "cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <ostream>
#include <set>
#include <sstream>

#include "stpc/dataio.hpp"
#include "stpc/error.hpp"
#include "stpc/gradcheck.hpp"
#include "stpc/ops.hpp"
#include "stpc/segnet.hpp"

namespace stpc::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string to_text(const std::string& s) { return s; }
std::string to_text(double v) { return fmt(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
template <std::integral T>
std::string to_text(T v) {
    return std::to_string(v);
}
std::string to_text(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Options of one subcommand. Every option is a long flag whose name doubles as a
// key in the `--config` file.
class Keys {
public:
    explicit Keys(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "flat `key = value` file; flags on the command line win");
    }

    template <typename T>
    CLI::Option* add(const std::string& key, T& var, const std::string& help) {
        printers_.emplace_back(key, [&var] { return to_text(var); });
        return app_->add_option("--" + key, var, help)->capture_default_str();
    }

    CLI::Option* add_list(const std::string& key, std::vector<std::size_t>& var, const std::string& help) {
        return add(key, var, help)->delimiter(',');
    }

    CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
        printers_.emplace_back(key, [&var] { return to_text(var); });
        return app_->add_flag("--" + key, var, help);
    }

    bool given(const std::string& key) const { return app_->get_option("--" + key)->count() > 0; }

    // Applies config-file values to every option not set on the command line.
    void load_config() {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) throw ConfigError("config", "cannot read '" + config_path_ + "'");
        std::set<std::string> seen;
        std::string line;
        for (std::size_t no = 1; std::getline(in, line); ++no) {
            const auto l = trim(line);
            if (l.empty() || l.front() == '#') continue;
            const auto eq = l.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("config", "line " + std::to_string(no) + ": expected 'key = value'");
            const std::string key(trim(l.substr(0, eq)));
            const std::string value(trim(l.substr(eq + 1)));
            if (!known(key)) throw ConfigError(key, "unknown key for '" + app_->get_name() + "'");
            if (!seen.insert(key).second) throw ConfigError(key, "set twice in '" + config_path_ + "'");
            CLI::Option* opt = app_->get_option("--" + key);
            if (opt->count() > 0) continue;
            try {
                opt->clear();
                opt->add_result(value);
                opt->run_callback();
            } catch (const CLI::Error& e) {
                throw ConfigError(key, e.what());
            }
        }
    }

    std::string resolved() const {
        std::string s = "# stpc " + app_->get_name() + "\n";
        for (const auto& [key, print] : printers_) s += key + " = " + print() + "\n";
        return s;
    }

    void write_resolved(const fs::path& dir) const {
        std::ofstream out(dir / "config.txt");
        out << resolved();
        if (!out) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
    }

private:
    bool known(const std::string& key) const {
        for (const auto& p : printers_)
            if (p.first == key) return true;
        return false;
    }

    CLI::App* app_;
    std::string config_path_;
    std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

struct NetOptions {
    NetworkConfig cfg;
    std::string aggregation{to_string(Aggregation::Anisotropic)};
    std::string feature_input{to_string(FeatureInput::Absolute)};

    void add_to(Keys& k) {
        k.add("channels", cfg.input_channels, "attribute channels per point");
        k.add("classes", cfg.num_classes, "number of classes");
        k.add("stages", cfg.num_stages, "encoder stages");
        k.add_list("widths", cfg.widths, "feature width per stage, comma separated");
        k.add("k", cfg.neighbors, "neighbors per point");
        k.add("atoms", cfg.atoms, "dictionary atoms M");
        k.add("atom-dim", cfg.atom_dim, "atom dimension c");
        k.add("tau", cfg.tau, "coefficient threshold");
        k.add("ratio", cfg.ratio, "random downsampling ratio between stages");
        k.add("lambda-dict", cfg.lambda_dict, "weight of the atom decorrelation term");
        k.add("lr", cfg.lr, "initial learning rate");
        k.add("lr-decay", cfg.lr_decay, "per-epoch learning rate factor");
        k.add("dict-lr-scale", cfg.dict_lr_scale, "learning rate factor for dictionary parameters");
        k.add("epochs", cfg.epochs, "training epochs");
        k.add("seed", cfg.seed, "initialization and shuffling seed");
        k.add("head-width", cfg.head_width, "hidden width of the classification head");
        k.add("aggregation", aggregation, "anisotropic, max, mean, sum or none");
        k.add("feature-input", feature_input, "absolute or relative neighbor coordinates");
    }

    NetworkConfig resolve() {
        try {
            cfg.aggregation = parse_aggregation(aggregation);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("aggregation", e.what());
        }
        try {
            cfg.feature_input = parse_feature_input(feature_input);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("feature-input", e.what());
        }
        cfg.validate();
        return cfg;
    }
};

void require(const Keys& keys, const std::string& key, const std::string& value) {
    if (value.empty() && !keys.given(key)) throw ConfigError(key, "is required");
    if (value.empty()) throw ConfigError(key, "must not be empty");
}

std::vector<PointCloud> load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("data", "no dataset directory at '" + dir + "'");
    if (!fs::exists(fs::path(dir) / "manifest.txt")) throw ConfigError("data", "'" + dir + "' has no manifest.txt");
    auto clouds = read_dataset(dir);
    if (clouds.empty()) throw ConfigError("data", "dataset '" + dir + "' is empty");
    return clouds;
}

void check_compatible(const std::vector<PointCloud>& clouds, const NetworkConfig& cfg, bool need_labels) {
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        const auto& c = clouds[i];
        if (c.channels != cfg.input_channels) {
            throw ConfigError("channels", "cloud " + std::to_string(i) + " has " + std::to_string(c.channels) +
                                              " channels, model expects " + std::to_string(cfg.input_channels));
        }
        if (need_labels && !c.has_labels()) throw ConfigError("data", "cloud " + std::to_string(i) + " has no labels");
        for (int l : c.labels)
            if (l < 0 || static_cast<std::size_t>(l) >= cfg.num_classes)
                throw ConfigError("classes", "cloud " + std::to_string(i) + " has label " + std::to_string(l) +
                                                 " but the model has " + std::to_string(cfg.num_classes) + " classes");
    }
}

std::vector<std::size_t> parse_positive_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::string_view s = text;
    while (true) {
        const auto comma = s.find(',');
        const auto item = trim(s.substr(0, comma));
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size() || item.empty())
            throw ConfigError(key, "cannot parse '" + std::string(item) + "' as an integer");
        if (v <= 0) throw ConfigError(key, "values must be positive, got " + std::to_string(v));
        out.push_back(static_cast<std::size_t>(v));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

std::vector<Aggregation> parse_variants(const std::string& text) {
    std::vector<Aggregation> out;
    std::string_view s = text;
    while (true) {
        const auto comma = s.find(',');
        try {
            out.push_back(parse_aggregation(trim(s.substr(0, comma))));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("variants", e.what());
        }
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

std::ofstream open_out(const fs::path& path, bool append = false) {
    std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
}

class Tee {
public:
    Tee(std::ostream& a, std::ostream& b) : a_(a), b_(b) {}
    void line(const std::string& s) {
        a_ << s << '\n';
        b_ << s << '\n' << std::flush;
    }

private:
    std::ostream& a_;
    std::ostream& b_;
};

// Trains a fresh model and scores it on the held-out clouds.
Metrics train_and_score(const NetworkConfig& cfg, const DatasetSplit& split) {
    TrainState st = make_train_state(cfg);
    train(st, split.train, {}, cfg.epochs);
    return evaluate(st.model, split.held_out);
}

DatasetSplit split_for_scoring(std::vector<PointCloud> clouds) {
    auto split = split_dataset(std::move(clouds));
    if (split.held_out.empty()) throw ConfigError("data", "need at least 5 clouds to hold out a scoring split");
    return split;
}

// ---- subcommands ----

struct Gen {
    SyntheticSpec spec;
    std::string kind{to_string(SyntheticKind::OrientedPlanes)};
    std::string out;

    void add_to(Keys& k) {
        k.add("kind", kind, "oriented-planes, corner-shapes or random-blobs");
        k.add("clouds", spec.clouds, "number of clouds");
        k.add("points", spec.points, "points per cloud");
        k.add("classes", spec.classes, "number of classes");
        k.add("noise", spec.noise, "Gaussian noise standard deviation");
        k.add("seed", spec.seed, "generator seed");
        k.add("out", out, "output dataset directory");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "out", out);
        spec.kind = parse_synthetic_kind(kind);
        spec.validate();
        std::vector<PointCloud> clouds;
        for (auto& s : gen_synthetic(spec)) clouds.push_back(std::move(s.cloud));
        write_dataset(out, clouds);
        keys.write_resolved(out);
        os << "wrote " << clouds.size() << " clouds to " << out << '\n';
        return kOk;
    }
};

struct Train {
    NetOptions net;
    std::string data, out, resume;

    void add_to(Keys& k) {
        net.add_to(k);
        k.add("data", data, "dataset directory written by `stpc gen`");
        k.add("out", out, "output directory");
        k.add("resume", resume, "checkpoint to continue from");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "data", data);
        require(keys, "out", out);
        NetworkConfig cfg = net.resolve();
        TrainState st;
        if (!resume.empty()) {
            static const char* fixed[] = {"channels", "classes", "stages", "widths", "k",  "atoms", "atom-dim",
                                          "tau", "ratio", "lambda-dict", "lr", "lr-decay", "dict-lr-scale",
                                          "seed", "head-width", "aggregation", "feature-input"};
            for (const char* key : fixed)
                if (keys.given(key)) throw ConfigError(key, "comes from the checkpoint when resuming");
            st = load_checkpoint(resume);
            const std::size_t epochs = cfg.epochs;
            net.cfg = st.model.config;
            net.cfg.epochs = epochs;
            net.aggregation = to_string(net.cfg.aggregation);
            net.feature_input = to_string(net.cfg.feature_input);
            st.model.config.epochs = epochs;
            cfg = net.cfg;
        } else {
            st = make_train_state(cfg);
        }
        auto clouds = load_dataset(data);
        check_compatible(clouds, cfg, true);
        const auto split = split_dataset(std::move(clouds));

        fs::create_directories(out);
        keys.write_resolved(out);
        auto log = open_out(fs::path(out) / "train.log", !resume.empty());
        Tee tee(log, os);
        train(st, split.train, split.held_out, cfg.epochs,
              [&](const EpochRecord& r) { tee.line(format_epoch_record(r)); });
        save_checkpoint(fs::path(out) / "checkpoint.stpc", st);

        auto csv = open_out(fs::path(out) / "metrics.csv");
        csv << "split," << metrics_csv_header(cfg.num_classes) << '\n';
        csv << "train," << metrics_csv_row(evaluate(st.model, split.train)) << '\n';
        if (!split.held_out.empty()) csv << "held_out," << metrics_csv_row(evaluate(st.model, split.held_out)) << '\n';
        return kOk;
    }
};

struct Eval {
    std::string checkpoint, data, out;
    std::size_t classes = 0;

    void add_to(Keys& k) {
        k.add("checkpoint", checkpoint, "trained checkpoint");
        k.add("data", data, "dataset directory");
        k.add("out", out, "output directory for metrics and predictions");
        k.add("classes", classes, "expected class count; 0 accepts the checkpoint's");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "checkpoint", checkpoint);
        require(keys, "data", data);
        require(keys, "out", out);
        if (!fs::exists(checkpoint)) throw ConfigError("checkpoint", "no file at '" + checkpoint + "'");
        const TrainState st = load_checkpoint(checkpoint);
        const auto& cfg = st.model.config;
        if (classes != 0 && classes != cfg.num_classes) {
            throw ConfigError("classes", "checkpoint predicts " + std::to_string(cfg.num_classes) + " classes, not " +
                                             std::to_string(classes));
        }
        const auto clouds = load_dataset(data);
        check_compatible(clouds, cfg, false);

        fs::create_directories(fs::path(out) / "predictions");
        keys.write_resolved(out);
        ConfusionMatrix cm(cfg.num_classes);
        for (std::size_t i = 0; i < clouds.size(); ++i) {
            const auto pred = predict(st.model, clouds[i], eval_sample_seed(cfg, i));
            std::ostringstream name;
            name << "cloud_" << std::setw(4) << std::setfill('0') << i << ".pred";
            write_predictions(fs::path(out) / "predictions" / name.str(), pred);
            if (clouds[i].has_labels()) cm.accumulate(clouds[i].labels, pred);
        }
        if (cm.total() > 0) {
            const auto m = compute_metrics(cm);
            auto csv = open_out(fs::path(out) / "metrics.csv");
            csv << metrics_csv_header(cfg.num_classes) << '\n' << metrics_csv_row(m) << '\n';
            os << metrics_key_values(m) << '\n';
        }
        return kOk;
    }
};

struct Ablate {
    NetOptions net;
    std::string data, out;
    std::string variants = "none,max,mean,sum,anisotropic";
    std::size_t seeds = 1;

    void add_to(Keys& k) {
        net.add_to(k);
        k.add("data", data, "dataset directory; every fifth cloud is scored");
        k.add("out", out, "output directory");
        k.add("variants", variants, "comma separated aggregation variants");
        k.add("seeds", seeds, "runs per variant, seeded seed, seed+1, ...");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "data", data);
        require(keys, "out", out);
        const NetworkConfig base = net.resolve();
        const auto list = parse_variants(variants);
        if (seeds == 0) throw ConfigError("seeds", "must be at least 1");
        auto clouds = load_dataset(data);
        check_compatible(clouds, base, true);
        const auto split = split_for_scoring(std::move(clouds));

        fs::create_directories(out);
        keys.write_resolved(out);
        auto csv = open_out(fs::path(out) / "ablation.csv");
        auto log = open_out(fs::path(out) / "ablate.log");
        Tee tee(log, os);
        csv << "variant,seed,miou,oa,macc\n";
        for (Aggregation variant : list) {
            for (std::size_t s = 0; s < seeds; ++s) {
                NetworkConfig cfg = base;
                cfg.aggregation = variant;
                cfg.seed = base.seed + s;
                const Metrics m = train_and_score(cfg, split);
                csv << to_string(variant) << ',' << cfg.seed << ',' << fmt(m.miou) << ',' << fmt(m.oa) << ','
                    << fmt(m.macc) << '\n'
                    << std::flush;
                tee.line("variant=" + std::string(to_string(variant)) + " seed=" + std::to_string(cfg.seed) +
                         " miou=" + fmt(m.miou) + " oa=" + fmt(m.oa) + " macc=" + fmt(m.macc));
            }
        }
        return kOk;
    }
};

struct SweepAtoms {
    NetOptions net;
    std::string data, out;
    std::string grid = "1,4,9,16,25,36";

    void add_to(Keys& k) {
        net.add_to(k);
        k.add("data", data, "dataset directory; every fifth cloud is scored");
        k.add("out", out, "output directory");
        k.add("grid", grid, "comma separated atom counts");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "data", data);
        require(keys, "out", out);
        const NetworkConfig base = net.resolve();
        if (base.aggregation != Aggregation::Anisotropic)
            throw ConfigError("aggregation", "sweep-atoms needs the anisotropic variant");
        const auto atoms = parse_positive_list("grid", grid);
        auto clouds = load_dataset(data);
        check_compatible(clouds, base, true);
        const auto split = split_for_scoring(std::move(clouds));

        fs::create_directories(out);
        keys.write_resolved(out);
        auto csv = open_out(fs::path(out) / "sweep_atoms.csv");
        auto log = open_out(fs::path(out) / "sweep.log");
        Tee tee(log, os);
        csv << "atoms,miou,oa,macc\n";
        for (std::size_t m : atoms) {
            NetworkConfig cfg = base;
            cfg.atoms = m;
            const Metrics r = train_and_score(cfg, split);
            csv << m << ',' << fmt(r.miou) << ',' << fmt(r.oa) << ',' << fmt(r.macc) << '\n' << std::flush;
            tee.line("atoms=" + std::to_string(m) + " miou=" + fmt(r.miou) + " oa=" + fmt(r.oa) + " macc=" + fmt(r.macc));
        }
        return kOk;
    }
};

struct InspectCoeffs {
    std::string checkpoint, cloud, out;
    long long point = 0;
    std::size_t stage = 0;
    bool pre_threshold = false;

    void add_to(Keys& k) {
        k.add("checkpoint", checkpoint, "trained anisotropic checkpoint");
        k.add("cloud", cloud, "stpc-xyz cloud file");
        k.add("point", point, "point index within the chosen stage");
        k.add("stage", stage, "encoder stage");
        k.flag("pre-threshold", pre_threshold, "write softmax coefficients before thresholding");
        k.add("out", out, "output directory");
    }

    int run(const Keys& keys, std::ostream& os) {
        require(keys, "checkpoint", checkpoint);
        require(keys, "cloud", cloud);
        require(keys, "out", out);
        if (!fs::exists(checkpoint)) throw ConfigError("checkpoint", "no file at '" + checkpoint + "'");
        if (!fs::exists(cloud)) throw ConfigError("cloud", "no file at '" + cloud + "'");
        const TrainState st = load_checkpoint(checkpoint);
        const auto& cfg = st.model.config;
        if (cfg.aggregation != Aggregation::Anisotropic)
            throw ConfigError("checkpoint", "model uses " + std::string(to_string(cfg.aggregation)) +
                                                " aggregation and has no coefficients");
        if (stage >= cfg.num_stages)
            throw ConfigError("stage", "model has " + std::to_string(cfg.num_stages) + " stages");
        const PointCloud pc = read_cloud(cloud);
        if (pc.channels != cfg.input_channels) throw ConfigError("channels", "cloud channels do not match the model");

        ForwardResult fr;
        {
            ad::NoGradGuard guard;
            fr = forward(st.model, pc, eval_sample_seed(cfg, 0));
        }
        const auto& coeffs = fr.coefficients[stage];
        const ad::Tensor& t = pre_threshold ? coeffs.raw : coeffs.alpha;
        const std::size_t n = t.dim(0), k = t.dim(1), m = t.dim(2);
        if (point < 0 || static_cast<std::size_t>(point) >= n)
            throw ConfigError("point", "index " + std::to_string(point) + " outside [0, " + std::to_string(n) + ")");

        fs::create_directories(out);
        keys.write_resolved(out);
        auto csv = open_out(fs::path(out) / "coefficients.csv");
        csv << 'k';
        for (std::size_t a = 1; a <= m; ++a) csv << ",m_" << a;
        csv << '\n';
        const auto d = t.data();
        const std::size_t base = static_cast<std::size_t>(point) * k * m;
        for (std::size_t j = 0; j < k; ++j) {
            csv << j + 1;
            for (std::size_t a = 0; a < m; ++a) csv << ',' << fmt(d[base + j * m + a]);
            csv << '\n';
        }
        os << "wrote " << k << "x" << m << " coefficients for point " << point << " of stage " << stage << '\n';
        return kOk;
    }
};

struct Gradcheck {
    NetOptions net;
    std::size_t points = 64;
    std::uint64_t data_seed = 0;
    ad::GradcheckOptions opts;
    std::string out;
    double perturb = 0.05;
    std::string corrupt_op;
    double corrupt_factor = 1.5;

    Gradcheck() {
        net.cfg.neighbors = 8;
        net.cfg.atoms = 4;
        net.cfg.atom_dim = 8;
        opts.floor = 1e-4;
    }

    void add_to(Keys& k) {
        net.add_to(k);
        k.add("points", points, "points in the synthetic test cloud");
        k.add("data-seed", data_seed, "seed of the synthetic test cloud");
        k.add("step", opts.step, "central difference half width");
        k.add("tolerance", opts.tolerance, "maximum relative error per block");
        k.add("floor", opts.floor, "relative error denominator floor");
        k.add("max-entries", opts.max_entries_per_block, "entries checked per block, 0 for all");
        k.add("perturb", perturb, "std of the seeded noise added to the initial parameters");
        k.add("out", out, "optional output directory for gradcheck.csv");
        k.add("corrupt-op", corrupt_op, "testing only: scale the backward rule of this primitive")
            ->group("Testing");
        k.add("corrupt-factor", corrupt_factor, "testing only: factor applied by --corrupt-op")->group("Testing");
    }

    int run(const Keys& keys, std::ostream& os) {
        const NetworkConfig cfg = net.resolve();
        if (points == 0) throw ConfigError("points", "must be at least 1");
        if (!(opts.step > 0.0)) throw ConfigError("step", "must be > 0");
        if (!(perturb >= 0.0)) throw ConfigError("perturb", "must be >= 0");

        SyntheticSpec spec;
        spec.clouds = 1;
        spec.points = points;
        spec.classes = std::min<std::size_t>(cfg.num_classes, 3);
        spec.seed = data_seed;
        const PointCloud cloud = gen_synthetic(spec)[0].cloud;
        if (cfg.input_channels != 0) throw ConfigError("channels", "gradcheck uses coordinate-only clouds");

        const SegModel model = build_model(cfg);
        auto params = model.parameters();
        // with zero biases the self offset maps to a zero direction, where cos has no derivative
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x6c));
        std::normal_distribution<double> noise(0.0, perturb);
        for (auto& p : params)
            for (double& v : p.tensor.mutable_data()) v += noise(rng);
        const std::uint64_t sample_seed = mix_seed(cfg.seed, 0x9c);
        auto loss = [&] {
            const auto fr = forward(model, cloud, sample_seed);
            return segmentation_loss(fr.logits, cloud.labels, fr.decorrelation, cfg.lambda_dict);
        };
        if (!corrupt_op.empty()) ad::set_fault_injection(corrupt_op, corrupt_factor);
        std::vector<ad::BlockReport> reports;
        try {
            reports = ad::gradient_check(loss, params, opts);
        } catch (...) {
            ad::set_fault_injection("", 1.0);
            throw;
        }
        ad::set_fault_injection("", 1.0);

        bool ok = true;
        std::ostringstream csv;
        csv << "block,entries,max_rel_error,max_abs_error,pass\n";
        for (const auto& r : reports) {
            ok &= r.pass;
            os << "block=" << r.name << " entries=" << r.entries_checked << " max_rel=" << fmt(r.max_rel_error)
               << " max_abs=" << fmt(r.max_abs_error) << ' ' << (r.pass ? "PASS" : "FAIL") << '\n';
            csv << r.name << ',' << r.entries_checked << ',' << fmt(r.max_rel_error) << ',' << fmt(r.max_abs_error)
                << ',' << (r.pass ? 1 : 0) << '\n';
        }
        os << (ok ? "gradcheck PASS" : "gradcheck FAIL") << " blocks=" << reports.size() << '\n';
        if (!out.empty()) {
            fs::create_directories(out);
            keys.write_resolved(out);
            open_out(fs::path(out) / "gradcheck.csv") << csv.str();
        }
        return ok ? kOk : kRuntimeFailure;
    }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial transformer point convolution: data generation, training and diagnostics", "stpc"};
    app.require_subcommand(1, 1);
    app.failure_message(CLI::FailureMessage::help);

    Gen gen;
    Train train_cmd;
    Eval eval_cmd;
    Ablate ablate;
    SweepAtoms sweep;
    InspectCoeffs inspect;
    Gradcheck gradcheck;

    std::vector<std::pair<CLI::App*, std::unique_ptr<Keys>>> subs;
    std::map<CLI::App*, std::function<int(const Keys&)>> runners;
    auto add = [&](const char* name, const char* help, auto& cmd) {
        CLI::App* sub = app.add_subcommand(name, help);
        auto keys = std::make_unique<Keys>(sub);
        cmd.add_to(*keys);
        runners[sub] = [&cmd, &out](const Keys& k) { return cmd.run(k, out); };
        subs.emplace_back(sub, std::move(keys));
    };
    add("gen", "generate a synthetic dataset", gen);
    add("train", "train a segmentation network", train_cmd);
    add("eval", "score a checkpoint and write per-cloud predictions", eval_cmd);
    add("ablate", "compare aggregation variants on the held-out split", ablate);
    add("sweep-atoms", "held-out scores versus dictionary size", sweep);
    add("inspect-coeffs", "dump the K x M coefficients of one point", inspect);
    add("gradcheck", "compare reverse-mode gradients with finite differences", gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << '\n';
        return kInvalidConfig;
    }

    for (auto& [sub, keys] : subs) {
        if (!sub->parsed()) continue;
        try {
            keys->load_config();
            return runners[sub](*keys);
        } catch (const ConfigError& e) {
            err << "invalid configuration: " << e.what() << '\n';
            return kInvalidConfig;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kRuntimeFailure;
        }
    }
    return kInvalidConfig;
}

}  // namespace stpc::cli
