// SPDX-License-Identifier: Apache-2.0
#include "splatlift/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace splatlift {

namespace fs = std::filesystem;

namespace {

constexpr double kSH0 = 0.28209479177387814;

// --- little-endian primitive IO (host is LE on every supported target) ----
template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("unexpected end of file");
    return v;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return is;
}

void put_magic(std::ostream& os, const char m[4]) { os.write(m, 4); }

void check_magic(std::istream& is, const char m[4], const char* what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::memcmp(buf, m, 4) != 0)
        throw std::runtime_error(std::string("bad magic, not a ") + what + " file");
}

// --- CRC32 (PNG) -----------------------------------------------------------
uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t n = 0; n < 256; ++n) {
            uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[n] = c;
        }
        init = true;
    }
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

void png_chunk(std::ostream& os, const char type[4], const std::vector<uint8_t>& data) {
    auto put_be = [&](uint32_t v) {
        const uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                              static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    put_be(static_cast<uint32_t>(data.size()));
    os.write(type, 4);
    if (!data.empty()) os.write(reinterpret_cast<const char*>(data.data()), data.size());
    std::vector<uint8_t> joined(4 + data.size());
    std::memcpy(joined.data(), type, 4);
    if (!data.empty()) std::memcpy(joined.data() + 4, data.data(), data.size());
    put_be(crc32_update(0, joined.data(), joined.size()));
}

uint32_t adler32(const std::vector<uint8_t>& data) {
    uint32_t a = 1, b = 0;
    for (uint8_t byte : data) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

} // namespace

void write_float_image(const fs::path& path, const FloatImage& img) {
    auto os = open_out(path);
    put_magic(os, "FIMG");
    put<uint16_t>(os, 1);
    put<uint32_t>(os, static_cast<uint32_t>(img.height()));
    put<uint32_t>(os, static_cast<uint32_t>(img.width()));
    put<uint32_t>(os, static_cast<uint32_t>(img.channels()));
    put<uint8_t>(os, static_cast<uint8_t>(img.semantics()));
    os.write(reinterpret_cast<const char*>(img.data()), img.size() * sizeof(float));
}

FloatImage read_float_image(const fs::path& path) {
    auto is = open_in(path);
    check_magic(is, "FIMG", "float image");
    const auto version = get<uint16_t>(is);
    if (version != 1) throw std::runtime_error("unsupported float image version");
    const auto h = get<uint32_t>(is);
    const auto w = get<uint32_t>(is);
    const auto c = get<uint32_t>(is);
    const auto sem = get<uint8_t>(is);
    FloatImage img(h, w, c, static_cast<ImageSemantics>(sem));
    is.read(reinterpret_cast<char*>(img.data()), img.size() * sizeof(float));
    if (!is) throw std::runtime_error("truncated float image payload");
    return img;
}

void write_png(const fs::path& path, const FloatImage& img) {
    const int h = img.height(), w = img.width();
    // raw scanlines with filter byte 0, 8-bit RGB
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + 3 * w));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = img.channels() == 1 ? img.at(y, x) : img.at(y, x, std::min(c, img.channels() - 1));
                const double clamped = std::min(1.0, std::max(0.0, static_cast<double>(v)));
                raw.push_back(static_cast<uint8_t>(std::lround(clamped * 255.0)));
            }
    }
    // zlib stream with stored (uncompressed) deflate blocks
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(n & 0xff);
        z.push_back((n >> 8) & 0xff);
        z.push_back(~n & 0xff);
        z.push_back((~n >> 8) & 0xff);
        z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
        off += n;
    }
    const uint32_t ad = adler32(raw);
    z.push_back((ad >> 24) & 0xff);
    z.push_back((ad >> 16) & 0xff);
    z.push_back((ad >> 8) & 0xff);
    z.push_back(ad & 0xff);

    auto os = open_out(path);
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    os.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<uint8_t> ihdr(13);
    auto put_be = [&](std::vector<uint8_t>& buf, size_t at, uint32_t v) {
        buf[at] = (v >> 24) & 0xff;
        buf[at + 1] = (v >> 16) & 0xff;
        buf[at + 2] = (v >> 8) & 0xff;
        buf[at + 3] = v & 0xff;
    };
    put_be(ihdr, 0, static_cast<uint32_t>(w));
    put_be(ihdr, 4, static_cast<uint32_t>(h));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // color type RGB
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    png_chunk(os, "IHDR", ihdr);
    png_chunk(os, "IDAT", z);
    png_chunk(os, "IEND", {});
}

void write_scene(const fs::path& path, const GaussianScene& scene) {
    auto os = open_out(path);
    put_magic(os, "GSCN");
    put<uint16_t>(os, 1);
    put<uint32_t>(os, static_cast<uint32_t>(scene.size()));
    put<uint8_t>(os, static_cast<uint8_t>(scene.sh_degree));
    const int colors = Gaussian3D::color_count(scene.sh_degree);
    for (const auto& g : scene.gaussians) {
        for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(g.mu[k]));
        put<float>(os, static_cast<float>(g.opacity));
        put<float>(os, static_cast<float>(g.rot.w));
        put<float>(os, static_cast<float>(g.rot.x));
        put<float>(os, static_cast<float>(g.rot.y));
        put<float>(os, static_cast<float>(g.rot.z));
        for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(g.scales[k]));
        for (int k = 0; k < colors; ++k) put<float>(os, static_cast<float>(g.color[k]));
    }
}

GaussianScene read_scene(const fs::path& path) {
    auto is = open_in(path);
    check_magic(is, "GSCN", "gaussian scene");
    const auto version = get<uint16_t>(is);
    if (version != 1) throw std::runtime_error("unsupported scene file version");
    const auto count = get<uint32_t>(is);
    const auto sh_degree = get<uint8_t>(is);
    GaussianScene scene;
    scene.sh_degree = sh_degree;
    scene.gaussians.resize(count);
    const int colors = Gaussian3D::color_count(scene.sh_degree);
    for (auto& g : scene.gaussians) {
        for (int k = 0; k < 3; ++k) g.mu[k] = get<float>(is);
        g.opacity = get<float>(is);
        g.rot.w = get<float>(is);
        g.rot.x = get<float>(is);
        g.rot.y = get<float>(is);
        g.rot.z = get<float>(is);
        for (int k = 0; k < 3; ++k) g.scales[k] = get<float>(is);
        for (int k = 0; k < colors; ++k) g.color[k] = get<float>(is);
    }
    return scene;
}

void write_ply(const fs::path& path, const GaussianScene& scene) {
    auto os = open_out(path);
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "element vertex " << scene.size() << "\n";
    for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                             "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"})
        header << "property float " << name << "\n";
    header << "end_header\n";
    os << header.str();
    auto logit = [](double p) {
        const double q = std::min(1.0 - 1e-6, std::max(1e-6, p));
        return std::log(q / (1.0 - q));
    };
    for (const auto& g : scene.gaussians) {
        for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(g.mu[k]));
        for (int k = 0; k < 3; ++k)
            put<float>(os, static_cast<float>((g.color[k] - 0.5) / kSH0));
        put<float>(os, static_cast<float>(logit(g.opacity)));
        for (int k = 0; k < 3; ++k) put<float>(os, static_cast<float>(std::log(g.scales[k])));
        put<float>(os, static_cast<float>(g.rot.w));
        put<float>(os, static_cast<float>(g.rot.x));
        put<float>(os, static_cast<float>(g.rot.y));
        put<float>(os, static_cast<float>(g.rot.z));
    }
}

GaussianScene read_ply(const fs::path& path) {
    auto is = open_in(path);
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw std::runtime_error("not a ply file");
    size_t count = 0;
    std::vector<std::string> props;
    bool binary_le = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (tok == "element") {
            std::string what;
            ls >> what >> count;
            if (what != "vertex") throw std::runtime_error("unsupported ply element");
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float") throw std::runtime_error("unsupported ply property type");
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw std::runtime_error("only binary little-endian ply is supported");
    auto index_of = [&](const std::string& name) {
        for (size_t i = 0; i < props.size(); ++i)
            if (props[i] == name) return static_cast<int>(i);
        throw std::runtime_error("ply missing property " + name);
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    const int idc0 = index_of("f_dc_0"), idc1 = index_of("f_dc_1"), idc2 = index_of("f_dc_2");
    const int iop = index_of("opacity");
    const int is0 = index_of("scale_0"), is1 = index_of("scale_1"), is2 = index_of("scale_2");
    const int ir0 = index_of("rot_0"), ir1 = index_of("rot_1"), ir2 = index_of("rot_2"),
              ir3 = index_of("rot_3");

    GaussianScene scene;
    scene.sh_degree = 0;
    scene.gaussians.resize(count);
    std::vector<float> row(props.size());
    for (auto& g : scene.gaussians) {
        is.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
        if (!is) throw std::runtime_error("truncated ply payload");
        g.mu = Eigen::Vector3d(row[ix], row[iy], row[iz]);
        for (int k = 0; k < 3; ++k)
            g.color[k] = 0.5 + kSH0 * row[k == 0 ? idc0 : (k == 1 ? idc1 : idc2)];
        g.opacity = 1.0 / (1.0 + std::exp(-static_cast<double>(row[iop])));
        g.scales = Eigen::Vector3d(std::exp(row[is0]), std::exp(row[is1]), std::exp(row[is2]));
        g.rot = Quaternion(row[ir0], row[ir1], row[ir2], row[ir3]);
    }
    return scene;
}

void write_checkpoint(const fs::path& path, const LifterParams& params) {
    auto os = open_out(path);
    put_magic(os, "LCKP");
    put<uint16_t>(os, 1);
    const LifterConfig& c = params.cfg;
    put<int32_t>(os, c.k);
    put<int32_t>(os, c.sh_degree);
    put<int32_t>(os, c.base_width);
    put<int32_t>(os, c.stages);
    put<int32_t>(os, c.width);
    put<int32_t>(os, c.height);
    put<double>(os, c.d_min);
    put<double>(os, c.d_max);
    put<double>(os, c.delta_scale);
    put<double>(os, c.s_min);
    put<double>(os, c.s_max);

    auto write_layer = [&](const ConvLayer& layer) {
        put<uint16_t>(os, static_cast<uint16_t>(layer.name.size()));
        os.write(layer.name.data(), layer.name.size());
        put<int32_t>(os, layer.in_c);
        put<int32_t>(os, layer.out_c);
        put<int32_t>(os, layer.k);
        put<int32_t>(os, layer.stride);
        auto write_vec = [&](const std::vector<double>& v) {
            put<uint64_t>(os, v.size());
            os.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
        };
        write_vec(layer.weight);
        write_vec(layer.bias);
        write_vec(layer.st_weight.m);
        write_vec(layer.st_weight.v);
        put<int64_t>(os, layer.st_weight.step);
        write_vec(layer.st_bias.m);
        write_vec(layer.st_bias.v);
        put<int64_t>(os, layer.st_bias.step);
    };
    put<uint32_t>(os, static_cast<uint32_t>(params.trunk.size()));
    for (const auto& layer : params.trunk) write_layer(layer);
    write_layer(params.head);
}

LifterParams read_checkpoint(const fs::path& path) {
    auto is = open_in(path);
    check_magic(is, "LCKP", "checkpoint");
    const auto version = get<uint16_t>(is);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    LifterConfig c;
    c.k = get<int32_t>(is);
    c.sh_degree = get<int32_t>(is);
    c.base_width = get<int32_t>(is);
    c.stages = get<int32_t>(is);
    c.width = get<int32_t>(is);
    c.height = get<int32_t>(is);
    c.d_min = get<double>(is);
    c.d_max = get<double>(is);
    c.delta_scale = get<double>(is);
    c.s_min = get<double>(is);
    c.s_max = get<double>(is);

    auto read_layer = [&]() {
        const auto name_len = get<uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto in_c = get<int32_t>(is);
        const auto out_c = get<int32_t>(is);
        const auto k = get<int32_t>(is);
        const auto stride = get<int32_t>(is);
        ConvLayer layer(name, in_c, out_c, k, stride);
        auto read_vec = [&](std::vector<double>& v) {
            const auto n = get<uint64_t>(is);
            v.resize(n);
            is.read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
            if (!is) throw std::runtime_error("truncated checkpoint");
        };
        read_vec(layer.weight);
        read_vec(layer.bias);
        read_vec(layer.st_weight.m);
        read_vec(layer.st_weight.v);
        layer.st_weight.step = get<int64_t>(is);
        read_vec(layer.st_bias.m);
        read_vec(layer.st_bias.v);
        layer.st_bias.step = get<int64_t>(is);
        return layer;
    };
    LifterParams params;
    params.cfg = c;
    const auto trunk_count = get<uint32_t>(is);
    for (uint32_t i = 0; i < trunk_count; ++i) params.trunk.push_back(read_layer());
    params.head = read_layer();
    return params;
}

namespace {

std::string view_name(int i, const char* ext) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "view_%03d.%s", i, ext);
    return buf;
}

nlohmann::ordered_json camera_to_json(const Camera& cam) {
    nlohmann::ordered_json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> w2c(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) w2c[r * 4 + col] = cam.pose.rotation(r, col);
        w2c[r * 4 + 3] = cam.pose.translation[r];
    }
    w2c[15] = 1.0;
    j["w2c"] = w2c;
    return j;
}

Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    const auto w2c = j.at("w2c").get<std::vector<double>>();
    if (w2c.size() != 16) throw std::runtime_error("malformed manifest: w2c must have 16 entries");
    for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) cam.pose.rotation(r, col) = w2c[r * 4 + col];
        cam.pose.translation[r] = w2c[r * 4 + 3];
    }
    cam.validate();
    return cam;
}

std::string pair_key(int i, int j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%d->%d", i, j);
    return buf;
}

} // namespace

FloatImage Dataset::load_image(int view) const { return read_float_image(root / views.at(view).image); }
FloatImage Dataset::load_depth(int view) const { return read_float_image(root / views.at(view).depth); }
FloatImage Dataset::load_mask(int input, int target) const {
    return read_float_image(root / mask_paths.at({input, target}));
}
bool Dataset::has_mask(int input, int target) const {
    return mask_paths.count({input, target}) > 0;
}

Dataset write_synth_dataset(const fs::path& dir, const QuadScene& scene,
                            const std::vector<Camera>& cameras) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "depths");
    fs::create_directories(dir / "masks");

    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["scene_id"] = scene.kind + "_" + std::to_string(scene.seed);
    manifest["kind"] = scene.kind;
    manifest["seed"] = scene.seed;
    manifest["views"] = nlohmann::ordered_json::array();

    for (size_t i = 0; i < cameras.size(); ++i) {
        auto [color, depth] = raycast_render(scene, cameras[i]);
        const std::string img_rel = "images/" + view_name(static_cast<int>(i), "fimg");
        const std::string png_rel = "images/" + view_name(static_cast<int>(i), "png");
        const std::string depth_rel = "depths/" + view_name(static_cast<int>(i), "fimg");
        write_float_image(dir / img_rel, color);
        write_png(dir / png_rel, color);
        write_float_image(dir / depth_rel, depth);
        nlohmann::ordered_json vj = camera_to_json(cameras[i]);
        vj["image"] = img_rel;
        vj["png"] = png_rel;
        vj["depth"] = depth_rel;
        manifest["views"].push_back(vj);
    }

    nlohmann::ordered_json masks = nlohmann::ordered_json::object();
    for (size_t i = 0; i < cameras.size(); ++i)
        for (size_t j = 0; j < cameras.size(); ++j) {
            if (i == j) continue;
            char buf[48];
            std::snprintf(buf, sizeof(buf), "masks/mask_%03zu_%03zu.fimg", i, j);
            write_float_image(dir / buf, oracle_visibility(scene, cameras[i], cameras[j]));
            masks[pair_key(static_cast<int>(i), static_cast<int>(j))] = buf;
        }
    manifest["masks"] = masks;

    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return load_dataset(dir);
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest: " + std::string(e.what()));
    }
    if (manifest.at("format_version").get<int>() != 1)
        throw std::runtime_error("unrecognized manifest version");
    Dataset ds;
    ds.root = dir;
    ds.scene_id = manifest.value("scene_id", "");
    ds.kind = manifest.value("kind", "");
    ds.seed = manifest.value("seed", 0ULL);
    for (const auto& vj : manifest.at("views")) {
        DatasetView view;
        view.image = vj.at("image");
        view.png = vj.value("png", "");
        view.depth = vj.value("depth", "");
        view.camera = camera_from_json(vj);
        if (!fs::exists(dir / view.image))
            throw std::runtime_error("manifest references missing file " + view.image);
        if (!view.depth.empty() && !fs::exists(dir / view.depth))
            throw std::runtime_error("manifest references missing file " + view.depth);
        ds.views.push_back(std::move(view));
    }
    if (manifest.contains("masks")) {
        for (const auto& [key, value] : manifest.at("masks").items()) {
            int a = 0, b = 0;
            if (std::sscanf(key.c_str(), "%d->%d", &a, &b) != 2)
                throw std::runtime_error("malformed mask key " + key);
            const std::string rel = value.get<std::string>();
            if (!fs::exists(dir / rel))
                throw std::runtime_error("manifest references missing file " + rel);
            ds.mask_paths[{a, b}] = rel;
        }
    }
    return ds;
}

uint64_t config_hash(const std::vector<std::pair<std::string, std::string>>& entries) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : entries) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

void write_stamp(const fs::path& path, const std::string& command, uint64_t seed,
                 uint64_t config_hash_value) {
    nlohmann::ordered_json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["seed"] = seed;
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash_value));
    j["config_hash"] = buf;
    write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const fs::path& path, const std::string& text) {
    auto os = open_out(path);
    os << text;
}

} // namespace splatlift
