#include "delayformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "delayformer/csv.hpp"
#include "delayformer/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native doubles and documented little-endian");

namespace delayformer {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'L', 'F', 'M'};

void append_u32(std::string& out, std::uint32_t v) {
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    out.append(bytes, 4);
}

json config_to_json(const ModelConfig& c) {
    return json{{"n_channels", c.n_channels}, {"w_in", c.w_in},
                {"horizon", c.horizon},       {"embedding_dim", c.embedding_dim},
                {"p1", c.p1},                 {"p2", c.p2},
                {"d_model", c.d_model},       {"n_blocks", c.n_blocks},
                {"n_heads", c.n_heads},       {"d_ff", c.d_ff},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    try {
        c.n_channels = j.at("n_channels").get<std::size_t>();
        c.w_in = j.at("w_in").get<std::size_t>();
        c.horizon = j.at("horizon").get<std::size_t>();
        c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        c.p1 = j.at("p1").get<std::size_t>();
        c.p2 = j.at("p2").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.n_blocks = j.at("n_blocks").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.d_ff = j.at("d_ff").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("checkpoint header: bad config: ") + e.what());
    }
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, const NormalizerStats& stats) {
    json manifest = json::array();
    std::string payload;
    params.for_each([&](const std::string& name, const Tensor& t) {
        manifest.push_back(
            json{{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
        const std::size_t bytes = t.size() * sizeof(double);
        const std::size_t pos = payload.size();
        payload.resize(pos + bytes);
        std::memcpy(payload.data() + pos, t.data(), bytes);
    });

    const json header{{"config", config_to_json(config)},
                      {"stats", json{{"mean", stats.mean}, {"stddev", stats.stddev}}},
                      {"tensors", manifest}};
    const std::string header_text = header.dump();

    std::string blob;
    blob.append(kMagic, 4);
    append_u32(blob, kCheckpointVersion);
    append_u32(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    blob += payload;

    atomic_write_text(path, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < 12) throw FormatError(path.string() + ": too short for a checkpoint");
    if (std::memcmp(blob.data(), kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic bytes");
    std::uint32_t version = 0, header_len = 0;
    std::memcpy(&version, blob.data() + 4, 4);
    std::memcpy(&header_len, blob.data() + 8, 4);
    if (version != kCheckpointVersion)
        throw UnsupportedVersionError(path.string() + ": checkpoint version " +
                                      std::to_string(version) + ", this build reads " +
                                      std::to_string(kCheckpointVersion));
    if (blob.size() < 12 + static_cast<std::size_t>(header_len))
        throw FormatError(path.string() + ": header extends past end of file");

    json header;
    try {
        header = json::parse(blob.begin() + 12, blob.begin() + 12 + header_len);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": header is not valid JSON: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    try {
        ckpt.stats.mean = header.at("stats").at("mean").get<std::vector<double>>();
        ckpt.stats.stddev = header.at("stats").at("stddev").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw IntegrityError(path.string() + ": bad normalizer stats: " + e.what());
    }

    const char* payload = blob.data() + 12 + header_len;
    const std::size_t payload_size = blob.size() - 12 - header_len;

    struct Entry {
        std::vector<std::size_t> shape;
        std::size_t offset;
    };
    std::map<std::string, Entry> entries;
    std::size_t expected_end = 0;
    try {
        for (const json& t : header.at("tensors")) {
            Entry e;
            e.shape = t.at("shape").get<std::vector<std::size_t>>();
            e.offset = t.at("offset").get<std::size_t>();
            std::size_t count = 1;
            for (std::size_t s : e.shape) count *= s;
            // Offsets must tile the payload in order: in-bounds, no overlap.
            if (e.offset != expected_end)
                throw IntegrityError(path.string() + ": tensor '" +
                                     t.at("name").get<std::string>() +
                                     "' at offset " + std::to_string(e.offset) + ", expected " +
                                     std::to_string(expected_end));
            expected_end = e.offset + count * sizeof(double);
            if (expected_end > payload_size)
                throw IntegrityError(path.string() + ": tensor '" +
                                     t.at("name").get<std::string>() +
                                     "' extends past end of file");
            if (!entries.emplace(t.at("name").get<std::string>(), std::move(e)).second)
                throw IntegrityError(path.string() + ": duplicate tensor '" +
                                     t.at("name").get<std::string>() + "'");
        }
    } catch (const json::exception& e) {
        throw IntegrityError(path.string() + ": bad tensor manifest: " + e.what());
    }

    ckpt.config.validate();
    ckpt.params = init_params(ckpt.config);  // right shapes; values overwritten below
    std::size_t filled = 0;
    ckpt.params.for_each([&](const std::string& name, Tensor& t) {
        const auto it = entries.find(name);
        if (it == entries.end())
            throw IntegrityError(path.string() + ": manifest is missing tensor '" + name + "'");
        Tensor loaded(it->second.shape);
        if (!loaded.same_shape(t))
            throw IntegrityError(path.string() + ": tensor '" + name + "' has shape " +
                                 loaded.shape_str() + ", config implies " + t.shape_str());
        std::memcpy(loaded.data(), payload + it->second.offset,
                    loaded.size() * sizeof(double));
        t = std::move(loaded);
        ++filled;
    });
    if (filled != entries.size())
        throw IntegrityError(path.string() + ": manifest lists " +
                             std::to_string(entries.size()) + " tensors, model has " +
                             std::to_string(filled));
    return ckpt;
}

}  // namespace delayformer
