#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "clonelm/errors.hpp"
#include "clonelm/model.hpp"
#include "clonelm/util.hpp"

namespace clonelm::nn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

using json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'L', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void append_raw(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    std::string_view data;
    std::size_t pos = 0;

    template <typename T>
    T read() {
        if (pos + sizeof(T) > data.size()) throw FormatError("truncated checkpoint");
        T value;
        std::memcpy(&value, data.data() + pos, sizeof(T));
        pos += sizeof(T);
        return value;
    }

    std::string read_bytes(std::size_t n) {
        if (pos + n > data.size()) throw FormatError("truncated checkpoint");
        std::string out(data.substr(pos, n));
        pos += n;
        return out;
    }
};

json config_to_json(const ModelConfig& c, Precision p) {
    return json{{"family", std::string(family_name(c.family))},
                {"vocab_size", c.vocab_size},
                {"embedding_dim", c.embedding_dim},
                {"hidden_dim", c.hidden_dim},
                {"num_layers", c.num_layers},
                {"num_heads", c.num_heads},
                {"context_length", c.context_length},
                {"init_scale", c.init_scale},
                {"precision", std::string(precision_name(p))}};
}

void config_from_json(const json& j, ModelConfig& c, Precision& p) {
    c.family = parse_family(j.at("family").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.context_length = j.at("context_length").get<std::size_t>();
    c.init_scale = j.at("init_scale").get<double>();
    p = parse_precision(j.at("precision").get<std::string>());
}

}  // namespace

void save_checkpoint(const ModelParameters& params, const std::string& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    append_raw(out, kVersion);

    std::string config = config_to_json(params.config, params.precision).dump();
    append_raw(out, static_cast<std::uint64_t>(config.size()));
    out += config;

    append_raw(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const Tensor& t : params.tensors) {
        append_raw(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        append_raw(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::size_t d : t.dims) append_raw(out, static_cast<std::uint64_t>(d));
        if (params.precision == Precision::F32) {
            for (double v : t.values) append_raw(out, static_cast<float>(v));
        } else {
            for (double v : t.values) append_raw(out, v);
        }
    }

    std::uint32_t crc = crc32(std::as_bytes(std::span(out.data(), out.size())));
    append_raw(out, crc);
    write_file(path, out);
}

ModelParameters load_checkpoint(const std::string& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) * 2)
        throw FormatError("checkpoint too small");

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - sizeof(stored_crc),
                sizeof(stored_crc));
    std::uint32_t actual_crc = crc32(std::as_bytes(
        std::span(bytes.data(), bytes.size() - sizeof(stored_crc))));
    if (stored_crc != actual_crc) throw FormatError("checkpoint CRC mismatch");

    Reader r{std::string_view(bytes.data(), bytes.size() - sizeof(stored_crc))};
    std::string magic = r.read_bytes(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("bad checkpoint magic");
    std::uint32_t version = r.read<std::uint32_t>();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));

    std::uint64_t config_len = r.read<std::uint64_t>();
    json config_json;
    try {
        config_json = json::parse(r.read_bytes(config_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad config block: ") + e.what());
    }
    ModelParameters params;
    config_from_json(config_json, params.config, params.precision);
    params.config.validate();

    std::vector<Tensor> expected = parameter_layout(params.config);
    std::uint32_t count = r.read<std::uint32_t>();
    if (count != expected.size()) throw FormatError("unexpected tensor count");

    for (Tensor& t : expected) {
        std::uint32_t name_len = r.read<std::uint32_t>();
        std::string name = r.read_bytes(name_len);
        if (name != t.name) throw FormatError("unexpected tensor '" + name + "'");
        std::uint32_t rank = r.read<std::uint32_t>();
        if (rank != t.dims.size()) throw FormatError("bad rank for '" + name + "'");
        for (std::size_t d = 0; d < rank; ++d) {
            if (r.read<std::uint64_t>() != t.dims[d])
                throw FormatError("bad dims for '" + name + "'");
        }
        for (double& v : t.values) {
            v = params.precision == Precision::F32
                    ? static_cast<double>(r.read<float>())
                    : r.read<double>();
            if (!std::isfinite(v))
                throw FormatError("non-finite value in '" + name + "'");
        }
    }
    if (r.pos != r.data.size()) throw FormatError("trailing bytes in checkpoint");

    params.tensors = std::move(expected);
    return params;
}

}  // namespace clonelm::nn
