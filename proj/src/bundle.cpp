#include "scengen/bundle.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "scengen/errors.hpp"

namespace scengen {

using nlohmann::json;
namespace fs = std::filesystem;

const Network& ModelBundle::net(const std::string& id) const {
    auto it = nets.find(id);
    if (it == nets.end())
        throw DataError("bundle: missing model part '" + id + "'");
    return it->second;
}

Network& ModelBundle::net(const std::string& id) {
    auto it = nets.find(id);
    if (it == nets.end())
        throw DataError("bundle: missing model part '" + id + "'");
    return it->second;
}

std::uint64_t fnv1a(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Linear: return "linear";
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::Conv1dTranspose: return "conv1d_transpose";
        case LayerKind::Identity: return "identity";
    }
    return "?";
}
LayerKind kind_of(const std::string& s) {
    if (s == "linear") return LayerKind::Linear;
    if (s == "conv1d") return LayerKind::Conv1d;
    if (s == "conv1d_transpose") return LayerKind::Conv1dTranspose;
    if (s == "identity") return LayerKind::Identity;
    throw DataError("bundle: unknown layer kind '" + s + "'");
}
const char* norm_name(NormKind k) {
    switch (k) {
        case NormKind::None: return "none";
        case NormKind::Batch: return "batch";
        case NormKind::Spectral: return "spectral";
    }
    return "?";
}
NormKind norm_of(const std::string& s) {
    if (s == "none") return NormKind::None;
    if (s == "batch") return NormKind::Batch;
    if (s == "spectral") return NormKind::Spectral;
    throw DataError("bundle: unknown norm kind '" + s + "'");
}
const char* act_name(ActKind k) {
    switch (k) {
        case ActKind::Relu: return "relu";
        case ActKind::LeakyRelu: return "leaky_relu";
        case ActKind::Linear: return "linear";
    }
    return "?";
}
ActKind act_of(const std::string& s) {
    if (s == "relu") return ActKind::Relu;
    if (s == "leaky_relu") return ActKind::LeakyRelu;
    if (s == "linear") return ActKind::Linear;
    throw DataError("bundle: unknown activation '" + s + "'");
}

json layer_to_json(const LayerSpec& l) {
    return json{{"kind", kind_name(l.kind)},   {"in", l.in_dim},
                {"out", l.out_dim},            {"kernel", l.kernel},
                {"stride", l.stride},          {"norm", norm_name(l.norm)},
                {"act", act_name(l.act)},      {"decl_ch", l.decl_ch},
                {"decl_len", l.decl_len}};
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.kind = kind_of(j.at("kind").get<std::string>());
    l.in_dim = j.at("in").get<int>();
    l.out_dim = j.at("out").get<int>();
    l.kernel = j.at("kernel").get<int>();
    l.stride = j.at("stride").get<int>();
    l.norm = norm_of(j.at("norm").get<std::string>());
    l.act = act_of(j.at("act").get<std::string>());
    l.decl_ch = j.at("decl_ch").get<int>();
    l.decl_len = j.at("decl_len").get<int>();
    return l;
}

json spec_to_json(const NetworkSpec& s) {
    json streams = json::array();
    for (const auto& st : s.streams) {
        json layers = json::array();
        for (const auto& l : st) layers.push_back(layer_to_json(l));
        streams.push_back(layers);
    }
    json trunk = json::array();
    for (const auto& l : s.trunk) trunk.push_back(layer_to_json(l));
    json inputs = json::array();
    for (const auto& sh : s.input_shapes) inputs.push_back(json::array({sh[0], sh[1]}));
    return json{{"id", s.id},
                {"latent_dim", s.latent_dim},
                {"condition_dim", s.condition_dim},
                {"input_shapes", inputs},
                {"streams", streams},
                {"trunk", trunk}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec s;
    s.id = j.at("id").get<std::string>();
    s.latent_dim = j.at("latent_dim").get<int>();
    s.condition_dim = j.at("condition_dim").get<int>();
    for (const auto& sh : j.at("input_shapes"))
        s.input_shapes.push_back({sh.at(0).get<int>(), sh.at(1).get<int>()});
    for (const auto& st : j.at("streams")) {
        std::vector<LayerSpec> layers;
        for (const auto& l : st) layers.push_back(layer_from_json(l));
        s.streams.push_back(std::move(layers));
    }
    for (const auto& l : j.at("trunk")) s.trunk.push_back(layer_from_json(l));
    return s;
}

json affine_to_json(const AffineMap& a) {
    return json{{"mean", a.mean}, {"scale", a.scale}};
}

AffineMap affine_from_json(const json& j) {
    AffineMap a;
    a.mean = j.at("mean").get<std::vector<double>>();
    a.scale = j.at("scale").get<std::vector<double>>();
    return a;
}

json feature_to_json(const FeatureSpec& f) {
    return json{{"name", f.name},
                {"group", f.group == FeatureGroup::Eqv ? "eqv" : "stv"},
                {"transition", f.transition == TransitionKind::Relative ? "relative" : "absolute"},
                {"scaled", f.scaled},
                {"scale_min", f.scale_min},
                {"scale_max", f.scale_max}};
}

FeatureSpec feature_from_json(const json& j) {
    FeatureSpec f;
    f.name = j.at("name").get<std::string>();
    f.group = j.at("group").get<std::string>() == "eqv" ? FeatureGroup::Eqv : FeatureGroup::Stv;
    f.transition = j.at("transition").get<std::string>() == "relative" ? TransitionKind::Relative
                                                                       : TransitionKind::Absolute;
    f.scaled = j.at("scaled").get<bool>();
    f.scale_min = j.at("scale_min").get<double>();
    f.scale_max = j.at("scale_max").get<double>();
    return f;
}

struct BlobWriter {
    std::vector<double> values;
    json index = json::array();

    void add(const std::string& name, const Tensor& t) {
        json entry{{"name", name},
                   {"offset", values.size()},
                   {"shape", t.shape()}};
        index.push_back(std::move(entry));
        values.insert(values.end(), t.data(), t.data() + t.size());
    }
};

struct BlobReader {
    std::vector<double> values;
    std::map<std::string, std::pair<std::size_t, Shape>> index;

    Tensor get(const std::string& name, const Shape& expect) const {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("bundle: blob entry '" + name + "' missing");
        const auto& [offset, shape] = it->second;
        if (shape != expect)
            throw DataError("bundle: shape mismatch at '" + name + "': stored " +
                            shape_str(shape) + ", expected " + shape_str(expect));
        const int n = shape_numel(shape);
        if (offset + n > values.size())
            throw DataError("bundle: blob entry '" + name + "' out of range");
        return Tensor(shape,
                      std::vector<double>(values.begin() + offset, values.begin() + offset + n));
    }
};

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& dir) {
    fs::create_directories(dir);
    BlobWriter blob;
    json nets = json::object();
    for (const auto& [id, net] : bundle.nets) {
        json jnet;
        jnet["spec"] = spec_to_json(net.spec());
        json tensors = json::array();
        for (std::size_t p = 0; p < net.params().size(); ++p) {
            blob.add(id + "/" + net.param_names()[p], net.params()[p]);
            tensors.push_back(net.param_names()[p]);
        }
        json bn = json::array();
        for (std::size_t b = 0; b < net.bn_stats().size(); ++b) {
            const BnStats& st = net.bn_stats()[b];
            json jb{{"initialized", st.initialized}};
            if (st.initialized) {
                blob.add(id + "/bn" + std::to_string(b) + ".mean", st.mean);
                blob.add(id + "/bn" + std::to_string(b) + ".var", st.var);
            }
            bn.push_back(jb);
        }
        json sn = json::array();
        for (std::size_t s = 0; s < net.sn_states().size(); ++s) {
            blob.add(id + "/sn" + std::to_string(s) + ".u", net.sn_states()[s].u);
            sn.push_back(static_cast<int>(net.sn_states()[s].u.size()));
        }
        jnet["bn"] = bn;
        jnet["sn"] = sn;
        nets[id] = jnet;
    }

    const std::size_t bytes = blob.values.size() * sizeof(double);
    char checksum[32];
    std::snprintf(checksum, sizeof checksum, "%016llx",
                  static_cast<unsigned long long>(fnv1a(blob.values.data(), bytes)));

    json manifest;
    manifest["schema_version"] = bundle.schema_version;
    manifest["endianness"] = "little";
    manifest["nets"] = nets;
    manifest["blob"] = json{{"file", "params.bin"},
                            {"doubles", blob.values.size()},
                            {"checksum_fnv1a", checksum},
                            {"index", blob.index}};
    manifest["state_affine"] = affine_to_json(bundle.state_affine);
    manifest["cond_affine"] = affine_to_json(bundle.cond_affine);
    manifest["target_affine"] = affine_to_json(bundle.target_affine);
    json feats = json::array();
    for (const FeatureSpec& f : bundle.features) feats.push_back(feature_to_json(f));
    manifest["features"] = feats;
    manifest["fingerprint"] = json{{"config_hash", bundle.fingerprint.config_hash},
                                   {"bigan_steps", bundle.fingerprint.bigan_steps},
                                   {"cgan_steps", bundle.fingerprint.cgan_steps}};

    {
        std::ofstream f(fs::path(dir) / "params.bin", std::ios::binary);
        if (!f) throw DataError("bundle: cannot write " + dir + "/params.bin");
        f.write(reinterpret_cast<const char*>(blob.values.data()),
                static_cast<std::streamsize>(bytes));
    }
    {
        std::ofstream f(fs::path(dir) / "manifest.json");
        if (!f) throw DataError("bundle: cannot write " + dir + "/manifest.json");
        f << manifest.dump(2) << '\n';
    }
}

ModelBundle load_bundle(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("bundle: cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);

    ModelBundle bundle;
    bundle.schema_version = manifest.at("schema_version").get<int>();
    if (bundle.schema_version != ModelBundle::kSchemaVersion)
        throw DataError("bundle: unsupported schema version " +
                        std::to_string(bundle.schema_version));

    const json& jblob = manifest.at("blob");
    const std::size_t doubles = jblob.at("doubles").get<std::size_t>();
    BlobReader blob;
    {
        std::ifstream f(fs::path(dir) / jblob.at("file").get<std::string>(), std::ios::binary);
        if (!f) throw DataError("bundle: cannot open blob file");
        blob.values.resize(doubles);
        f.read(reinterpret_cast<char*>(blob.values.data()),
               static_cast<std::streamsize>(doubles * sizeof(double)));
        if (static_cast<std::size_t>(f.gcount()) != doubles * sizeof(double))
            throw DataError("bundle: checksum failure (blob truncated)");
    }
    char checksum[32];
    std::snprintf(checksum, sizeof checksum, "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a(blob.values.data(), doubles * sizeof(double))));
    if (jblob.at("checksum_fnv1a").get<std::string>() != checksum)
        throw DataError("bundle: checksum failure");
    for (const auto& e : jblob.at("index")) {
        Shape shape = e.at("shape").get<Shape>();
        blob.index[e.at("name").get<std::string>()] = {e.at("offset").get<std::size_t>(),
                                                       shape};
    }

    for (const auto& [id, jnet] : manifest.at("nets").items()) {
        NetworkSpec spec = spec_from_json(jnet.at("spec"));
        Network net(spec, 0);
        for (std::size_t p = 0; p < net.params().size(); ++p)
            net.params()[p] =
                blob.get(id + "/" + net.param_names()[p], net.params()[p].shape());
        const json& bn = jnet.at("bn");
        const std::vector<int> bn_dims = net.bn_channels();
        for (std::size_t b = 0; b < net.bn_stats().size(); ++b) {
            BnStats& st = net.bn_stats()[b];
            st.initialized = bn.at(b).at("initialized").get<bool>();
            if (st.initialized) {
                const Shape shape = {bn_dims.at(b)};
                st.mean = blob.get(id + "/bn" + std::to_string(b) + ".mean", shape);
                st.var = blob.get(id + "/bn" + std::to_string(b) + ".var", shape);
            }
        }
        for (std::size_t s = 0; s < net.sn_states().size(); ++s) {
            const int rows = jnet.at("sn").at(s).get<int>();
            net.sn_states()[s].u = blob.get(id + "/sn" + std::to_string(s) + ".u", {rows});
        }
        bundle.nets.emplace(id, std::move(net));
    }

    bundle.state_affine = affine_from_json(manifest.at("state_affine"));
    bundle.cond_affine = affine_from_json(manifest.at("cond_affine"));
    bundle.target_affine = affine_from_json(manifest.at("target_affine"));
    for (const auto& f : manifest.at("features")) bundle.features.push_back(feature_from_json(f));
    bundle.fingerprint.config_hash =
        manifest.at("fingerprint").at("config_hash").get<std::string>();
    bundle.fingerprint.bigan_steps = manifest.at("fingerprint").at("bigan_steps").get<int>();
    bundle.fingerprint.cgan_steps = manifest.at("fingerprint").at("cgan_steps").get<int>();
    return bundle;
}

}  // namespace scengen
