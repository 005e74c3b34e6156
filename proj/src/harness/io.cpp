#include "contdt/harness/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "contdt/errors.hpp"

namespace contdt {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > end_) throw IoError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

std::uint64_t get_u64(const std::string& bytes, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
}

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& entries) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (shape_numel(e.shape) != e.values.size())
            throw DimensionError("checkpoint entry " + e.name + " has inconsistent shape");
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 + 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError("not a checkpoint (bad magic)");
    const std::size_t body = bytes.size() - 8;
    if (fnv1a64(bytes.data(), body) != get_u64(bytes, body)) throw IoError("checkpoint checksum mismatch");
    Reader r(bytes, body);
    (void)r.str(4);
    if (const auto version = r.u32(); version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        e.name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
        const std::size_t n = shape_numel(e.shape);
        e.values.resize(n);
        for (std::size_t j = 0; j < n; ++j) e.values[j] = std::bit_cast<float>(r.u32());
        out.push_back(std::move(e));
    }
    if (r.pos() != body) throw IoError("trailing bytes in checkpoint");
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    write_file(path, encode_checkpoint(entries));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

std::vector<NamedTensor> snapshot(const ParamList& params) {
    std::vector<NamedTensor> out;
    for (const auto& p : params) {
        const auto v = p.tensor->values();
        out.push_back({p.name, p.tensor->shape(), std::vector<float>(v.begin(), v.end())});
    }
    return out;
}

void restore(const ParamList& params, const std::vector<NamedTensor>& entries) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& e : entries)
        if (!by_name.emplace(e.name, &e).second) throw IoError("duplicate checkpoint entry " + e.name);
    if (by_name.size() != params.size())
        throw IoError("checkpoint has " + std::to_string(by_name.size()) + " entries, model expects " +
                      std::to_string(params.size()));
    for (const auto& p : params) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) throw IoError("checkpoint lacks " + p.name);
        if (it->second->shape != p.tensor->shape())
            throw IoError("shape mismatch for " + p.name + ": " + shape_str(it->second->shape) + " vs " +
                          shape_str(p.tensor->shape()));
        auto dst = p.tensor->values();
        std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
}

namespace {

NamedTensor meta(const std::string& name, std::vector<float> values) {
    const std::size_t n = values.size();
    return {"meta/" + name, {n}, std::move(values)};
}

}  // namespace

std::vector<NamedTensor> adapter_entries(const AdapterSet& set, const DTConfig& cfg, std::uint64_t fingerprint) {
    const int rank = set.blocks.empty() ? 0 : static_cast<int>(set.blocks.front().a0.shape()[0]);
    std::vector<NamedTensor> out;
    out.push_back(meta("task", {static_cast<float>(set.task)}));
    out.push_back(meta("k", {static_cast<float>(set.blocks.size())}));
    out.push_back(meta("r", {static_cast<float>(rank)}));
    out.push_back(meta("h", {static_cast<float>(cfg.embed_dim)}));
    out.push_back(meta("d", {static_cast<float>(cfg.mlp_dim)}));
    std::vector<float> chunks;
    for (int i = 0; i < 4; ++i) chunks.push_back(static_cast<float>((fingerprint >> (16 * i)) & 0xffffu));
    out.push_back(meta("fingerprint", std::move(chunks)));
    for (std::size_t b = 0; b < set.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        visit_adapter(set.blocks[b], [&](const char* n, const Tensor& t) {
            out.push_back({prefix + n, t.shape(), std::vector<float>(t.values().begin(), t.values().end())});
        });
    }
    return out;
}

LoadedAdapters read_adapter_entries(const std::vector<NamedTensor>& entries, std::uint64_t expected_fingerprint) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    auto scalar = [&](const std::string& name) {
        const auto it = by_name.find("meta/" + name);
        if (it == by_name.end() || it->second->values.size() != 1) throw IoError("adapter file lacks meta/" + name);
        return static_cast<int>(it->second->values[0]);
    };
    LoadedAdapters out;
    out.set.task = scalar("task");
    const int k = scalar("k");
    const auto fp = by_name.find("meta/fingerprint");
    if (fp == by_name.end() || fp->second->values.size() != 4) throw IoError("adapter file lacks meta/fingerprint");
    for (int i = 0; i < 4; ++i)
        out.fingerprint |= static_cast<std::uint64_t>(fp->second->values[static_cast<std::size_t>(i)]) << (16 * i);
    for (int b = 0; b < k; ++b) {
        LoRAAdapter a;
        const std::string prefix = "block" + std::to_string(b) + ".";
        visit_adapter(a, [&](const char* n, Tensor& t) {
            const auto it = by_name.find(prefix + n);
            if (it == by_name.end()) throw IoError("adapter file lacks " + prefix + n);
            t = Tensor(it->second->shape, std::vector<Scalar>(it->second->values.begin(), it->second->values.end()));
            t.set_requires_grad(true);
        });
        out.set.blocks.push_back(std::move(a));
    }
    if (out.fingerprint != expected_fingerprint)
        std::cerr << "warning: adapters for task " << out.set.task
                  << " were saved against a different base model\n";
    return out;
}

std::size_t payload_elements(const std::vector<NamedTensor>& entries) {
    std::size_t n = 0;
    for (const auto& e : entries)
        if (e.name.rfind("meta/", 0) != 0) n += e.values.size();
    return n;
}

namespace {

using nlohmann::ordered_json;

ordered_json floats(const std::vector<Scalar>& v) {
    ordered_json a = ordered_json::array();
    for (Scalar x : v) a.push_back(static_cast<double>(x));
    return a;
}

std::vector<Scalar> read_floats(const ordered_json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw IoError(std::string("dataset record lacks ") + key);
    std::vector<Scalar> out;
    for (const auto& x : j[key]) out.push_back(static_cast<Scalar>(x.get<double>()));
    return out;
}

ordered_json header(const OfflineDataset& data) {
    ordered_json h;
    h["family"] = to_string(data.task.family);
    h["parameter"] = data.task.parameter;
    h["quality"] = to_string(data.quality);
    h["H"] = data.task.horizon;
    h["n_traj"] = data.trajectories.size();
    h["seed"] = data.seed;
    h["version"] = kDatasetVersion;
    h["transitions"] = data.transitions();
    return h;
}

void append_trajectories(std::string& out, const std::vector<Trajectory>& trajectories) {
    for (const auto& t : trajectories) {
        ordered_json j;
        j["states"] = floats(t.states);
        j["actions"] = floats(t.actions);
        j["rewards"] = floats(t.rewards);
        j["returns_to_go"] = floats(t.returns_to_go);
        j["episode_return"] = static_cast<double>(t.episode_return);
        out += j.dump() + "\n";
    }
}

}  // namespace

std::string encode_dataset(const OfflineDataset& data) {
    std::string out = header(data).dump() + "\n";
    append_trajectories(out, data.trajectories);
    return out;
}

std::string encode_buffer(const ReplayBuffer& buffer, const OfflineDataset& source) {
    ordered_json h = header(source);
    h["n_traj"] = buffer.trajectories.size();
    h["transitions"] = buffer.transitions();
    h["buffer"] = {{"task_index", buffer.task_index},
                   {"capacity", buffer.capacity},
                   {"source_indices", buffer.source_indices}};
    std::string out = h.dump() + "\n";
    append_trajectories(out, buffer.trajectories);
    return out;
}

OfflineDataset decode_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty dataset file");
    OfflineDataset data;
    try {
        const auto h = ordered_json::parse(line);
        if (h.at("version").get<int>() != kDatasetVersion) throw IoError("unsupported dataset version");
        data.task.family = parse_family(h.at("family").get<std::string>());
        data.task.parameter = h.at("parameter").get<double>();
        data.task.horizon = h.at("H").get<int>();
        data.quality = parse_quality(h.at("quality").get<std::string>());
        data.seed = h.at("seed").get<std::uint64_t>();
        const auto n = h.at("n_traj").get<std::size_t>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = ordered_json::parse(line);
            Trajectory t;
            t.states = read_floats(j, "states");
            t.actions = read_floats(j, "actions");
            t.rewards = read_floats(j, "rewards");
            t.returns_to_go = read_floats(j, "returns_to_go");
            t.episode_return = static_cast<Scalar>(j.at("episode_return").get<double>());
            const std::size_t len = t.rewards.size();
            if (t.states.size() != (len + 1) * kStateDim || t.actions.size() != len * kActionDim ||
                t.returns_to_go.size() != len)
                throw IoError("dataset record has inconsistent lengths");
            data.trajectories.push_back(std::move(t));
        }
        if (data.trajectories.size() != n) throw IoError("dataset header promises " + std::to_string(n) +
                                                         " trajectories, file has " +
                                                         std::to_string(data.trajectories.size()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed dataset file: ") + e.what());
    }
    return data;
}

void save_dataset(const std::filesystem::path& path, const OfflineDataset& data) {
    write_file(path, encode_dataset(data));
}

OfflineDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace contdt
