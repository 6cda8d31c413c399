#include "van/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace van {

namespace {

// --- little-endian primitives ------------------------------------------------

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw CorruptionError(std::string("checkpoint truncated while reading ") + what);
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

template <typename T>
constexpr std::uint8_t dtype_tag();
template <>
constexpr std::uint8_t dtype_tag<float>() { return 0; }
template <>
constexpr std::uint8_t dtype_tag<double>() { return 1; }

void put_element(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(buf, bits);
}

void put_element(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(buf, bits);
}

float get_element_f32(Reader& r) {
    const std::uint32_t bits = r.u32("payload");
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

double get_element_f64(Reader& r) {
    const std::uint64_t bits = r.u64("payload");
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace

template <typename T>
void save_checkpoint(const ModelWeights<T>& model, const std::string& path) {
    auto& mutable_model = const_cast<ModelWeights<T>&>(model);
    const auto refs = model_tensor_refs(mutable_model);

    std::string buf;
    buf += "VANW";
    put_u16(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(refs.size()));
    for (const auto& ref : refs) {
        put_u32(buf, static_cast<std::uint32_t>(ref.name.size()));
        buf += ref.name;
        buf.push_back(static_cast<char>(dtype_tag<T>()));
        buf.push_back(static_cast<char>(ref.tensor->rank()));
        for (std::size_t e : ref.tensor->shape()) {
            put_u32(buf, static_cast<std::uint32_t>(e));
        }
        for (T v : ref.tensor->data()) put_element(buf, v);
    }
    write_file(path, buf);
}

template <typename T>
ModelWeights<T> load_checkpoint(const std::string& path, const VanVariant& variant) {
    const std::string data = read_file(path);
    Reader r{data};

    if (r.bytes(4, "magic") != "VANW") {
        throw FormatError("bad checkpoint magic in " + path);
    }
    const std::uint16_t version = r.u16("version");
    if (version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                           " (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    ModelWeights<T> model = build_van<T>(variant, 0);
    const auto refs = model_tensor_refs(model);
    const std::uint32_t count = r.u32("entry count");
    if (count != refs.size()) {
        throw IntegrityError("checkpoint holds " + std::to_string(count) + " tensors, variant " +
                             variant.name + " expects " + std::to_string(refs.size()));
    }

    for (const auto& ref : refs) {
        const std::uint32_t name_len = r.u32("name length");
        const std::string name = r.bytes(name_len, "name");
        if (name != ref.name) {
            throw IntegrityError("tensor name mismatch: checkpoint has '" + name +
                                 "', variant expects '" + ref.name + "'");
        }
        const std::uint8_t tag = r.u8("dtype");
        if (tag != dtype_tag<T>()) {
            throw IntegrityError("dtype mismatch for tensor '" + name + "'");
        }
        const std::uint8_t rank = r.u8("rank");
        Shape shape(rank);
        for (auto& e : shape) e = r.u32("extent");
        if (shape != ref.tensor->shape()) {
            throw IntegrityError("shape mismatch for tensor '" + name + "': checkpoint " +
                                 shape_to_string(shape) + ", variant expects " +
                                 shape_to_string(ref.tensor->shape()));
        }
        for (std::size_t i = 0; i < ref.tensor->size(); ++i) {
            if constexpr (std::is_same_v<T, float>) {
                (*ref.tensor)[i] = get_element_f32(r);
            } else {
                (*ref.tensor)[i] = get_element_f64(r);
            }
        }
    }
    if (r.pos != data.size()) {
        throw CorruptionError("trailing bytes after the last checkpoint entry");
    }
    return model;
}

template void save_checkpoint<float>(const ModelWeights<float>&, const std::string&);
template void save_checkpoint<double>(const ModelWeights<double>&, const std::string&);
template ModelWeights<float> load_checkpoint<float>(const std::string&, const VanVariant&);
template ModelWeights<double> load_checkpoint<double>(const std::string&, const VanVariant&);

// --- variant config ----------------------------------------------------------

namespace {

using nlohmann::json;

std::size_t require_count(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("config missing key '" + std::string(key) + "' in " + where);
    const json& v = j.at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() < 1) {
        throw ConfigError("config key '" + std::string(key) + "' in " + where +
                          " must be a positive integer");
    }
    return v.get<std::size_t>();
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
                return it.key() == k;
            }) == allowed.end()) {
            throw ConfigError("unknown config key '" + it.key() + "' in " + where);
        }
    }
}

}  // namespace

VanVariant parse_variant_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(j, {"name", "stages", "lka_kernel", "lka_dilation", "num_classes",
                            "layerscale_init"},
                        "config root");

    VanVariant v;
    if (!j.contains("name") || !j.at("name").is_string()) {
        throw ConfigError("config needs a string 'name'");
    }
    v.name = j.at("name").get<std::string>();
    if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").size() != 4) {
        throw ConfigError("config needs a 'stages' array of exactly 4 entries");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const json& js = j.at("stages")[i];
        const std::string where = "stages[" + std::to_string(i) + "]";
        if (!js.is_object()) throw ConfigError(where + " must be an object");
        reject_unknown_keys(js, {"channels", "depth", "expansion_ratio"}, where);
        StageConfig s;
        s.channels = require_count(js, "channels", where);
        s.depth = require_count(js, "depth", where);
        s.expansion_ratio = require_count(js, "expansion_ratio", where);
        if (i == 0) {
            s.downsample_kernel = 7;
            s.downsample_stride = 4;
            s.downsample_padding = 3;
        } else {
            s.downsample_kernel = 3;
            s.downsample_stride = 2;
            s.downsample_padding = 1;
        }
        v.stages[i] = s;
    }
    v.lka_nominal_kernel = require_count(j, "lka_kernel", "config root");
    v.lka_dilation = require_count(j, "lka_dilation", "config root");
    v.num_classes = require_count(j, "num_classes", "config root");
    if (!j.contains("layerscale_init") || !j.at("layerscale_init").is_number()) {
        throw ConfigError("config needs a numeric 'layerscale_init'");
    }
    v.layerscale_init = j.at("layerscale_init").get<double>();
    v.validate();
    return v;
}

VanVariant load_variant_config(const std::string& path) {
    return parse_variant_config(read_file(path));
}

std::string variant_config_to_json(const VanVariant& variant) {
    json stages = json::array();
    for (const StageConfig& s : variant.stages) {
        stages.push_back({{"channels", s.channels},
                          {"depth", s.depth},
                          {"expansion_ratio", s.expansion_ratio}});
    }
    const json j{{"name", variant.name},
                 {"stages", stages},
                 {"lka_kernel", variant.lka_nominal_kernel},
                 {"lka_dilation", variant.lka_dilation},
                 {"num_classes", variant.num_classes},
                 {"layerscale_init", variant.layerscale_init}};
    return j.dump(2) + "\n";
}

VanVariant resolve_variant(const std::string& name_or_path) {
    if (auto preset = find_preset(name_or_path)) return *preset;
    std::ifstream probe(name_or_path);
    if (!probe) {
        throw ConfigError("'" + name_or_path +
                          "' is neither a preset name (B0..B6, micro) nor a readable config file");
    }
    return load_variant_config(name_or_path);
}

// --- images --------------------------------------------------------------------

namespace {

constexpr std::array<float, 3> kImageMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImageStd{0.229f, 0.224f, 0.225f};

// Consumes whitespace and '#' comment lines between PPM header tokens.
void skip_ppm_space(const std::string& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

std::size_t read_ppm_int(const std::string& buf, std::size_t& pos, const std::string& path) {
    skip_ppm_space(buf, pos);
    std::size_t v = 0;
    bool any = false;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
        v = v * 10 + static_cast<std::size_t>(buf[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) throw IoError("malformed PPM header in " + path);
    return v;
}

}  // namespace

TensorF load_ppm_image(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6') {
        throw IoError("not a binary PPM (P6) file: " + path);
    }
    std::size_t pos = 2;
    const std::size_t width = read_ppm_int(buf, pos, path);
    const std::size_t height = read_ppm_int(buf, pos, path);
    const std::size_t maxval = read_ppm_int(buf, pos, path);
    if (maxval != 255) throw IoError("PPM maxval must be 255 in " + path);
    if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) {
        throw IoError("malformed PPM header in " + path);
    }
    ++pos;  // single whitespace byte before the raster
    const std::size_t need = width * height * 3;
    if (buf.size() - pos < need) throw IoError("PPM pixel data truncated in " + path);

    TensorF out = TensorF::zeros({1, 3, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const auto raw = static_cast<unsigned char>(buf[pos + (y * width + x) * 3 + c]);
                const float unit = static_cast<float>(raw) / 255.0f;
                out.at4(0, c, y, x) = (unit - kImageMean[c]) / kImageStd[c];
            }
        }
    }
    return out;
}

TensorF load_raw_tensor(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data};
    Shape shape(4);
    for (auto& e : shape) e = r.u32("raw tensor extent");
    TensorF out = TensorF::zeros(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_element_f32(r);
    if (r.pos != data.size()) throw IoError("trailing bytes in raw tensor file " + path);
    return out;
}

void save_raw_tensor(const TensorF& t, const std::string& path) {
    if (t.rank() != 4) throw ShapeError("raw tensor files are rank-4 only");
    std::string buf;
    for (std::size_t e : t.shape()) put_u32(buf, static_cast<std::uint32_t>(e));
    for (float v : t.data()) put_element(buf, v);
    write_file(path, buf);
}

TensorF load_image_file(const std::string& path) {
    const auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".ppm") return load_ppm_image(path);
    return load_raw_tensor(path);
}

TensorF center_crop_to_multiple_of_32(const TensorF& image) {
    const std::size_t h32 = (image.height() / 32) * 32;
    const std::size_t w32 = (image.width() / 32) * 32;
    if (h32 == 0 || w32 == 0) {
        throw GeometryError("image too small to crop to a multiple of 32");
    }
    if (h32 == image.height() && w32 == image.width()) return image;
    const std::size_t oy = (image.height() - h32) / 2;
    const std::size_t ox = (image.width() - w32) / 2;
    TensorF out = TensorF::zeros({image.batch(), image.channels(), h32, w32});
    for (std::size_t n = 0; n < image.batch(); ++n) {
        for (std::size_t c = 0; c < image.channels(); ++c) {
            for (std::size_t y = 0; y < h32; ++y) {
                for (std::size_t x = 0; x < w32; ++x) {
                    out.at4(n, c, y, x) = image.at4(n, c, y + oy, x + ox);
                }
            }
        }
    }
    return out;
}

}  // namespace van
