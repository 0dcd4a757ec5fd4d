#include "fedmmd/io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fedmmd {

namespace fs = std::filesystem;

namespace {

constexpr char kCkptMagic[9] = "FMCKPT01";
constexpr char kShardMagic[9] = "FMSHRD01";

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of file");
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

}  // namespace

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void atomic_write_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path().string());
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    std::string out((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return out;
}

void append_line(const std::string& path, const std::string& line) {
    fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path().string());
    std::ofstream os(path, std::ios::binary | std::ios::app);
    if (!os) throw IoError("cannot open for appending: " + path);
    os << line << '\n';
    if (!os) throw IoError("append failed: " + path);
}

void save_checkpoint(const std::string& path, const ModelWeights& w) {
    fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path().string());
    std::string tmp = path + ".tmp";
    {
        auto os = open_out(tmp);
        os.write(kCkptMagic, 8);
        put<uint32_t>(os, static_cast<uint32_t>(w.num_slots()));
        uint32_t split = 0;
        for (size_t i = 0; i < w.num_slots(); ++i)
            if (w.slot(i).offset < w.split_offset()) split = static_cast<uint32_t>(i + 1);
        put<uint32_t>(os, split);
        for (size_t i = 0; i < w.num_slots(); ++i) {
            const auto& s = w.slot(i);
            put<uint32_t>(os, static_cast<uint32_t>(s.name.size()));
            os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
            put<int32_t>(os, s.rows);
            put<int32_t>(os, s.cols);
        }
        os.write(reinterpret_cast<const char*>(w.raw().data()),
                 static_cast<std::streamsize>(w.raw().size() * sizeof(double)));
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

ModelWeights load_checkpoint(const std::string& path) {
    auto is = open_in(path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path);
    uint32_t nslots = get<uint32_t>(is);
    uint32_t split = get<uint32_t>(is);
    if (nslots % 2 != 0 || split % 2 != 0 || split > nslots)
        throw IoError("corrupt checkpoint header: " + path);

    // Rebuild the spec from the slot shapes (W/b pairs per layer); activation
    // tags are not stored, so the loaded weights carry identity activations
    // and are only meant for weight transfer and inspection.
    MlpSpec spec;
    std::vector<std::pair<int, int>> shapes;
    for (uint32_t i = 0; i < nslots; ++i) {
        uint32_t len = get<uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        int32_t r = get<int32_t>(is);
        int32_t c = get<int32_t>(is);
        shapes.emplace_back(r, c);
    }
    for (uint32_t i = 0; i < nslots; i += 2)
        spec.layers.push_back({shapes[i].first, shapes[i].second, Activation::identity});
    spec.extractor_layers = static_cast<int>(split / 2);

    ModelWeights w(spec);
    is.read(reinterpret_cast<char*>(w.raw().data()),
            static_cast<std::streamsize>(w.raw().size() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint: " + path);
    return w;
}

void save_shard(const std::string& path, const ClientShard& shard,
                const std::string& metadata_json) {
    fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path().string());
    std::string tmp = path + ".tmp";
    {
        auto os = open_out(tmp);
        os.write(kShardMagic, 8);
        put<int32_t>(os, shard.client_id);
        put<int64_t>(os, static_cast<int64_t>(shard.features.rows()));
        put<int32_t>(os, static_cast<int32_t>(shard.features.cols()));
        int32_t n_classes = 0;
        for (int y : shard.labels) n_classes = std::max(n_classes, y + 1);
        put<int32_t>(os, n_classes);
        os.write(reinterpret_cast<const char*>(shard.features.data()),
                 static_cast<std::streamsize>(shard.features.size() * sizeof(double)));
        for (int y : shard.labels) put<int32_t>(os, y);
        put<int64_t>(os, static_cast<int64_t>(shard.train_idx.size()));
        for (int i : shard.train_idx) put<int32_t>(os, i);
        put<int64_t>(os, static_cast<int64_t>(shard.test_idx.size()));
        for (int i : shard.test_idx) put<int32_t>(os, i);
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
    atomic_write_file(path + ".json", metadata_json);
}

ClientShard load_shard(const std::string& path) {
    auto is = open_in(path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kShardMagic, 8) != 0)
        throw IoError("not a shard file: " + path);
    ClientShard shard;
    shard.client_id = get<int32_t>(is);
    int64_t n = get<int64_t>(is);
    int32_t dim = get<int32_t>(is);
    get<int32_t>(is);  // n_classes, derivable
    if (n < 1 || dim < 1) throw IoError("corrupt shard header: " + path);
    shard.features.resize(n, dim);
    is.read(reinterpret_cast<char*>(shard.features.data()),
            static_cast<std::streamsize>(n * dim * sizeof(double)));
    shard.labels.resize(n);
    for (auto& y : shard.labels) y = get<int32_t>(is);
    int64_t tn = get<int64_t>(is);
    shard.train_idx.resize(tn);
    for (auto& i : shard.train_idx) i = get<int32_t>(is);
    int64_t sn = get<int64_t>(is);
    shard.test_idx.resize(sn);
    for (auto& i : shard.test_idx) i = get<int32_t>(is);
    if (!is) throw IoError("truncated shard: " + path);
    return shard;
}

}  // namespace fedmmd
