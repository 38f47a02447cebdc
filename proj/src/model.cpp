#include "fedfa/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "fedfa/error.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

bool ArchSpec::same_shape(const ArchSpec& other) const {
    return input_dim == other.input_dim && output_dim == other.output_dim && sections == other.sections;
}

void validate(const ArchSpec& arch) {
    if (arch.input_dim == 0 || arch.output_dim == 0)
        throw Error("bad-arch", "input and output dims must be positive");
    if (arch.sections.empty()) throw Error("bad-arch", "at least one section required");
    for (const auto& s : arch.sections)
        if (s.depth == 0 || s.width == 0) throw Error("bad-arch", "section depth and width must be >= 1");
}

bool is_subarch(const ArchSpec& sub, const ArchSpec& super) {
    if (sub.input_dim != super.input_dim || sub.output_dim != super.output_dim) return false;
    if (sub.sections.size() != super.sections.size()) return false;
    for (std::size_t s = 0; s < sub.sections.size(); ++s)
        if (sub.sections[s].depth > super.sections[s].depth || sub.sections[s].width > super.sections[s].width)
            return false;
    return true;
}

ArchSpec max_arch(const std::vector<ArchSpec>& archs) {
    if (archs.empty()) throw Error("bad-arch", "max_arch of empty roster");
    ArchSpec out = archs.front();
    out.seed_tag = "global";
    for (const auto& a : archs) {
        validate(a);
        if (a.input_dim != out.input_dim || a.output_dim != out.output_dim ||
            a.sections.size() != out.sections.size())
            throw Error("bad-arch", "roster archs differ in section count or I/O dims");
        for (std::size_t s = 0; s < a.sections.size(); ++s) {
            out.sections[s].depth = std::max(out.sections[s].depth, a.sections[s].depth);
            out.sections[s].width = std::max(out.sections[s].width, a.sections[s].width);
        }
    }
    return out;
}

std::vector<LayerShape> layer_shapes(const ArchSpec& arch) {
    validate(arch);
    std::vector<LayerShape> shapes;
    std::size_t prev = arch.input_dim;
    for (std::size_t s = 0; s < arch.sections.size(); ++s) {
        const auto sec = static_cast<int>(s);
        const std::size_t w = arch.sections[s].width;
        shapes.push_back({{LayerKind::entry, sec, -1}, w, prev});
        shapes.push_back({{LayerKind::static_norm, sec, -1}, w, 0});
        for (std::size_t b = 0; b < arch.sections[s].depth; ++b)
            shapes.push_back({{LayerKind::block, sec, static_cast<int>(b)}, w, w});
        prev = w;
    }
    shapes.push_back({{LayerKind::output, static_cast<int>(arch.sections.size()) - 1, -1}, arch.output_dim, prev});
    return shapes;
}

std::size_t param_count(const ArchSpec& arch) {
    std::size_t n = 0;
    for (const auto& ls : layer_shapes(arch))
        if (ls.key.kind != LayerKind::static_norm) n += ls.out * ls.in + ls.out;
    return n;
}

std::string to_canonical_json(const ArchSpec& arch) {
    nlohmann::json j;
    j["input_dim"] = arch.input_dim;
    j["output_dim"] = arch.output_dim;
    j["seed_tag"] = arch.seed_tag;
    j["sections"] = nlohmann::json::array();
    for (const auto& s : arch.sections) j["sections"].push_back({{"depth", s.depth}, {"width", s.width}});
    return j.dump();
}

ArchSpec arch_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ArchSpec a;
        a.input_dim = j.at("input_dim").get<std::size_t>();
        a.output_dim = j.at("output_dim").get<std::size_t>();
        a.seed_tag = j.value("seed_tag", std::string{});
        for (const auto& s : j.at("sections"))
            a.sections.push_back({s.at("depth").get<std::size_t>(), s.at("width").get<std::size_t>()});
        validate(a);
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw Error("bad-arch", e.what());
    }
}

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::entry: return "entry";
        case LayerKind::static_norm: return "static_norm";
        case LayerKind::block: return "block";
        case LayerKind::output: return "output";
    }
    return "?";
}

std::size_t Layer::out_dim() const { return is_linear() ? weight.rows() : norm_mean->size(); }
std::size_t Layer::in_dim() const { return is_linear() ? weight.cols() : 0; }

const Layer* Model::find(const LayerKey& key) const {
    for (const auto& l : layers)
        if (l.key() == key) return &l;
    return nullptr;
}

Layer* Model::find(const LayerKey& key) {
    for (auto& l : layers)
        if (l.key() == key) return &l;
    return nullptr;
}

bool Model::all_finite() const {
    for (const auto& l : layers) {
        if (l.is_linear() && !(l.weight.all_finite() && l.bias.all_finite())) return false;
        if (!l.is_linear() && !(l.norm_mean->all_finite() && l.norm_std->all_finite())) return false;
    }
    return true;
}

void check_consistent(const Model& m) {
    const auto shapes = layer_shapes(m.arch);
    if (shapes.size() != m.layers.size()) throw Error("shape-error", "layer count does not match arch");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& l = m.layers[i];
        const auto& s = shapes[i];
        if (l.key() != s.key) throw Error("shape-error", "layer order does not match arch");
        if (l.is_linear()) {
            if (l.weight.shape() != std::vector<std::size_t>{s.out, s.in} ||
                l.bias.shape() != std::vector<std::size_t>{s.out})
                throw Error("shape-error", "linear layer shape does not match arch");
        } else if (!l.norm_mean || !l.norm_std || l.norm_mean->shape() != std::vector<std::size_t>{s.out} ||
                   l.norm_std->shape() != std::vector<std::size_t>{s.out}) {
            throw Error("shape-error", "static-norm statistics do not match arch");
        }
    }
}

Model build_model(const ArchSpec& arch, std::uint64_t seed, StaticNormConstants norm) {
    validate(arch);
    if (!(norm.std > 0.0)) throw Error("bad-arch", "static-norm std must be positive");
    Rng rng(seed);
    Model m{arch, {}};
    for (const auto& ls : layer_shapes(arch)) {
        Layer l;
        l.kind = ls.key.kind;
        l.section = ls.key.section;
        l.block_index = ls.key.block_index;
        if (l.kind == LayerKind::static_norm) {
            l.norm_mean = Tensor({ls.out}, norm.mean);
            l.norm_std = Tensor({ls.out}, norm.std);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(ls.in));
            l.weight = Tensor({ls.out, ls.in});
            for (auto& w : l.weight.data()) w = rng.uniform(-bound, bound);
            l.bias = Tensor({ls.out});
        }
        m.layers.push_back(std::move(l));
    }
    return m;
}

Model extract_submodel(const Model& global, const ArchSpec& target) {
    validate(target);
    if (!is_subarch(target, global.arch)) throw Error("not-a-submodel", "target exceeds the global arch");
    Model out{target, {}};
    for (const auto& ls : layer_shapes(target)) {
        const Layer* src = global.find(ls.key);
        if (src == nullptr) throw Error("not-a-submodel", "global model lacks a target layer");
        Layer l = *src;
        if (l.is_linear()) {
            l.weight = slice2d(src->weight, ls.out, ls.in);
            l.bias = slice1d(src->bias, ls.out);
        } else {
            l.norm_mean = slice1d(*src->norm_mean, ls.out);
            l.norm_std = slice1d(*src->norm_std, ls.out);
        }
        out.layers.push_back(std::move(l));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format:
//   "FEDFA1" | u32 json_len | canonical arch JSON |
//   per layer in model order, per tensor (weight, bias | mean, std):
//     u32 rank | u32 dims[rank] | f64 data[prod(dims)]
// All integers and floats little-endian.

namespace {

constexpr char kMagic[] = {'F', 'E', 'D', 'F', 'A', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error("bad-checkpoint", "payload truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    Tensor tensor(const std::vector<std::size_t>& expected) {
        const std::uint32_t rank = u32();
        if (rank != expected.size()) throw Error("bad-checkpoint", "tensor rank mismatch");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = u32();
        if (shape != expected) throw Error("bad-checkpoint", "tensor shape mismatch");
        const std::size_t n = shape_product(shape);
        need(n * 8);
        std::vector<double> data(n);
        for (auto& v : data) v = f64();
        return Tensor(std::move(shape), std::move(data));
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& m) {
    check_consistent(m);
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    const std::string json = to_canonical_json(m.arch);
    put_u32(out, static_cast<std::uint32_t>(json.size()));
    out.insert(out.end(), json.begin(), json.end());
    for (const auto& l : m.layers) {
        if (l.is_linear()) {
            put_tensor(out, l.weight);
            put_tensor(out, l.bias);
        } else {
            put_tensor(out, *l.norm_mean);
            put_tensor(out, *l.norm_std);
        }
    }
    return out;
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw Error("bad-checkpoint", "bad magic");
    const std::uint32_t json_len = r.u32();
    ArchSpec arch;
    try {
        arch = arch_from_json(r.str(json_len));
    } catch (const Error& e) {
        if (e.code() == "bad-checkpoint") throw;
        throw Error("bad-checkpoint", e.what());
    }
    Model m{arch, {}};
    for (const auto& ls : layer_shapes(arch)) {
        Layer l;
        l.kind = ls.key.kind;
        l.section = ls.key.section;
        l.block_index = ls.key.block_index;
        if (l.kind == LayerKind::static_norm) {
            l.norm_mean = r.tensor({ls.out});
            l.norm_std = r.tensor({ls.out});
        } else {
            l.weight = r.tensor({ls.out, ls.in});
            l.bias = r.tensor({ls.out});
        }
        m.layers.push_back(std::move(l));
    }
    if (!r.done()) throw Error("bad-checkpoint", "trailing bytes after last tensor");
    if (!m.all_finite()) throw Error("bad-checkpoint", "non-finite parameter");
    return m;
}

void save_checkpoint(const Model& m, const std::string& path) {
    const auto bytes = serialize_model(m);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("io-error", "cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("io-error", "write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("io-error", "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace fedfa
