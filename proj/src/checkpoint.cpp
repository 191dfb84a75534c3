#include <cstring>

#include "json.hpp"

#include "bdan/errors.hpp"
#include "bdan/model.hpp"
#include "le_io.hpp"

namespace bdan {

namespace {

constexpr unsigned char kMagic[4] = {'B', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Entry {
    std::string name;
    Shape shape;
    std::vector<Real> values;
};

std::vector<Entry> collect(const ModelParams& p) {
    std::vector<Entry> out;
    for (const auto& [name, t] : p.trainable()) out.push_back({name, t->shape(), t->to_vector()});
    const std::pair<const char*, const BatchNormParams*> bns[] = {{"bn1", &p.bn1}, {"bn2", &p.bn2}, {"bn3", &p.bn3}};
    for (const auto& [name, bn] : bns) {
        out.push_back({std::string(name) + ".running_mean", {bn->running_mean.size()}, bn->running_mean});
        out.push_back({std::string(name) + ".running_var", {bn->running_var.size()}, bn->running_var});
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    const auto entries = collect(params);
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : entries) {
        tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.values.size()}});
        offset += e.values.size();
    }
    const nlohmann::json manifest{
        {"dims",
         {{"electrodes", params.dims.electrodes},
          {"time_points", params.dims.time_points},
          {"classes", params.dims.classes}}},
        {"dropout_rate", static_cast<double>(params.dropout_rate)},
        {"bn_momentum", static_cast<double>(params.bn1.momentum)},
        {"bn_eps", static_cast<double>(params.bn1.eps)},
        {"tensors", tensors}};
    const std::string text = manifest.dump();

    std::vector<unsigned char> out(kMagic, kMagic + 4);
    le::put<std::uint32_t>(out, kCheckpointVersion);
    le::put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& e : entries)
        for (Real v : e.values) le::put<double>(out, static_cast<double>(v));
    le::write_file(path.string(), out);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    const auto buf = le::read_file(path.string());
    le::Reader r(buf);
    std::string magic;
    if (!r.bytes(4, magic) || std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic", 0);
    std::uint32_t version = 0;
    if (!r.get(version)) throw FormatError("checkpoint: truncated header", r.offset());
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
    std::uint64_t len = 0;
    if (!r.get(len)) throw FormatError("checkpoint: truncated header", r.offset());
    std::string text;
    const std::size_t manifest_at = r.offset();
    if (len > r.remaining() || !r.bytes(static_cast<std::size_t>(len), text))
        throw FormatError("checkpoint: truncated manifest", manifest_at);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad manifest: ") + e.what(), manifest_at);
    }
    const std::size_t payload_at = r.offset();

    ModelParams p;
    try {
        ModelDims dims;
        dims.electrodes = manifest.at("dims").at("electrodes").get<std::size_t>();
        dims.time_points = manifest.at("dims").at("time_points").get<std::size_t>();
        dims.classes = manifest.at("dims").at("classes").get<std::size_t>();
        p = ModelParams::init(dims, 0);
        p.dropout_rate = static_cast<Real>(manifest.at("dropout_rate").get<double>());
        for (auto* bn : {&p.bn1, &p.bn2, &p.bn3}) {
            bn->momentum = static_cast<Real>(manifest.value("bn_momentum", 0.9));
            bn->eps = static_cast<Real>(manifest.value("bn_eps", 1e-5));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad manifest: ") + e.what(), manifest_at);
    }

    const auto expected = collect(p);
    const auto& tensors = manifest.at("tensors");
    if (!tensors.is_array() || tensors.size() != expected.size())
        throw FormatError("checkpoint: tensor count mismatch", manifest_at);

    auto named = p.trainable();
    std::size_t total = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& t = tensors[i];
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<Shape>();
        const auto off = t.at("offset").get<std::size_t>();
        const auto count = t.at("count").get<std::size_t>();
        if (name != expected[i].name || shape != expected[i].shape || count != expected[i].values.size() ||
            off != total)
            throw FormatError("checkpoint: unexpected tensor entry '" + name + "'", manifest_at);
        total += count;
    }
    if (buf.size() - payload_at != total * sizeof(double))
        throw FormatError("checkpoint: payload holds " + std::to_string(buf.size() - payload_at) + " bytes, expected " +
                              std::to_string(total * sizeof(double)),
                          payload_at);

    auto read_values = [&r](std::size_t count) {
        std::vector<Real> v(count);
        for (auto& x : v) {
            double d = 0;
            r.get(d);
            x = static_cast<Real>(d);
        }
        return v;
    };
    for (auto& [name, t] : named) *t = Tensor::from(t->shape(), read_values(t->size()), true);
    for (auto* bn : {&p.bn1, &p.bn2, &p.bn3}) {
        bn->running_mean = read_values(bn->running_mean.size());
        bn->running_var = read_values(bn->running_var.size());
    }
    return p;
}

}  // namespace bdan
