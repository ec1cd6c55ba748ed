#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stpc/error.hpp"
#include "stpc/segnet.hpp"

namespace stpc {

namespace {

constexpr char kMagic[5] = {'S', 'T', 'P', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        bytes_.append(reinterpret_cast<const char*>(raw), sizeof(T));
    }
    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes_.append(s);
    }
    void put_raw(const char* p, std::size_t n) { bytes_.append(p, n); }
    std::string take() { return std::move(bytes_); }

private:
    std::string bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view get_raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError(0, "checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void put_adam(ByteWriter& w, const ad::AdamState& s) {
    w.put<std::int64_t>(s.step);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.first_moment.size()));
    for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
        w.put<std::uint64_t>(s.first_moment[i].size());
        for (double v : s.first_moment[i]) w.put(v);
        for (double v : s.second_moment[i]) w.put(v);
    }
}

ad::AdamState get_adam(ByteReader& r) {
    ad::AdamState s;
    s.step = r.get<std::int64_t>();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto n = r.get<std::uint64_t>();
        std::vector<double> m(n), v(n);
        for (auto& x : m) x = r.get<double>();
        for (auto& x : v) x = r.get<double>();
        s.first_moment.push_back(std::move(m));
        s.second_moment.push_back(std::move(v));
    }
    return s;
}

}  // namespace

std::string encode_checkpoint(const TrainState& state) {
    ByteWriter w;
    w.put_raw(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kVersion);
    w.put_string(state.model.config.to_text());
    w.put<std::uint64_t>(state.epochs_done);
    const auto params = state.model.parameters();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.put_string(p.name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) w.put<std::uint64_t>(d);
        for (double v : p.tensor.data()) w.put(v);
    }
    w.put<std::uint32_t>(2);
    put_adam(w, state.network_opt);
    put_adam(w, state.dictionary_opt);
    return w.take();
}

TrainState decode_checkpoint(std::string_view bytes) {
    ByteReader r(bytes);
    if (r.get_raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
        throw FormatError(0, "not a checkpoint (missing STPC1 magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError(0, "unsupported checkpoint version " + std::to_string(version));
    TrainState state;
    state.model = build_model(NetworkConfig::from_text(r.get_string()));
    state.epochs_done = r.get<std::uint64_t>();

    auto params = state.model.parameters();
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) {
        throw FormatError(0, "checkpoint holds " + std::to_string(count) + " tensors, model has " +
                                 std::to_string(params.size()));
    }
    for (auto& p : params) {
        const std::string name = r.get_string();
        if (name != p.name) throw FormatError(0, "expected tensor '" + p.name + "', found '" + name + "'");
        ad::Shape shape(r.get<std::uint32_t>());
        for (auto& d : shape) d = r.get<std::uint64_t>();
        if (shape != p.tensor.shape())
            throw FormatError(0, "tensor '" + name + "' has shape " + ad::shape_str(shape) + ", model expects " +
                                     ad::shape_str(p.tensor.shape()));
        for (double& v : p.tensor.mutable_data()) v = r.get<double>();
    }
    const auto groups = r.get<std::uint32_t>();
    if (groups != 2) throw FormatError(0, "expected 2 optimizer groups, found " + std::to_string(groups));
    state.network_opt = get_adam(r);
    state.dictionary_opt = get_adam(r);
    if (!r.done()) throw FormatError(0, "trailing bytes after checkpoint payload");
    return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string bytes = encode_checkpoint(state);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace stpc
