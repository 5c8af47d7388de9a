#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "scengen/bundle.hpp"
#include "scengen/rng.hpp"

using namespace scengen;
namespace fs = std::filesystem;

namespace {

Tensor random_batch(int batch, int dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({batch, dim});
    for (int i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

ModelBundle small_bundle() {
    ModelBundle b;
    b.nets.emplace("gen_S", build_network(gen_s_spec(), 41));
    b.nets.emplace("enc_Z", build_network(enc_z_spec(), 42));
    b.nets.emplace("disc_SZ", build_network(disc_sz_spec(), 43));
    // populate batchnorm stats so inference works after reload
    for (const char* id : {"gen_S", "enc_Z"}) {
        Network& n = b.net(id);
        Tape t;
        BindOptions bo;
        bo.mode = Mode::Train;
        bo.requires_grad = false;
        Binding bind = n.bind(t, bo);
        std::vector<Tensor> ins;
        for (const auto& sh : n.spec().input_shapes)
            ins.push_back(random_batch(4, sh[0] * sh[1], 7));
        n.forward(bind, ins);
    }
    b.state_affine = AffineMap::identity(7);
    b.state_affine.mean[2] = 0.5;
    b.state_affine.scale[3] = 2.0;
    b.cond_affine = AffineMap::identity(18);
    b.target_affine = AffineMap::identity(10);
    b.features = default_eqv_features();
    auto stv = default_stv_features();
    b.features.insert(b.features.end(), stv.begin(), stv.end());
    b.fingerprint.config_hash = "deadbeef";
    b.fingerprint.bigan_steps = 123;
    return b;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("save then load preserves forward outputs to the last bit") {
    ModelBundle b = small_bundle();
    const std::string dir = "/tmp/scengen_bundle_a";
    fs::remove_all(dir);
    save_bundle(b, dir);
    ModelBundle back = load_bundle(dir);

    Tensor z = random_batch(3, 8, 99);
    Tensor a = b.net("gen_S").infer({z});
    Tensor c = back.net("gen_S").infer({z});
    REQUIRE(a.size() == c.size());
    for (int i = 0; i < a.size(); ++i) CHECK(a.at(i) == c.at(i));

    Tensor x = random_batch(3, 7, 98);
    Tensor e1 = b.net("enc_Z").infer({x});
    Tensor e2 = back.net("enc_Z").infer({x});
    for (int i = 0; i < e1.size(); ++i) CHECK(e1.at(i) == e2.at(i));

    CHECK(back.fingerprint.config_hash == "deadbeef");
    CHECK(back.fingerprint.bigan_steps == 123);
    CHECK(back.state_affine.mean[2] == 0.5);
    CHECK(back.features.size() == 18);
}

TEST_CASE("loading then saving is byte-identical") {
    ModelBundle b = small_bundle();
    const std::string d1 = "/tmp/scengen_bundle_b1";
    const std::string d2 = "/tmp/scengen_bundle_b2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    save_bundle(b, d1);
    ModelBundle back = load_bundle(d1);
    save_bundle(back, d2);
    CHECK(read_file(fs::path(d1) / "manifest.json") == read_file(fs::path(d2) / "manifest.json"));
    CHECK(read_file(fs::path(d1) / "params.bin") == read_file(fs::path(d2) / "params.bin"));
}

TEST_CASE("a truncated blob fails the checksum") {
    ModelBundle b = small_bundle();
    const std::string dir = "/tmp/scengen_bundle_c";
    fs::remove_all(dir);
    save_bundle(b, dir);
    const fs::path blob = fs::path(dir) / "params.bin";
    const auto size = fs::file_size(blob);
    fs::resize_file(blob, size - 16);
    try {
        load_bundle(dir);
        FAIL("expected checksum failure");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
}

TEST_CASE("a corrupted blob fails the checksum") {
    ModelBundle b = small_bundle();
    const std::string dir = "/tmp/scengen_bundle_d";
    fs::remove_all(dir);
    save_bundle(b, dir);
    const fs::path blob = fs::path(dir) / "params.bin";
    {
        std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(64);
        const char junk = 0x5a;
        f.write(&junk, 1);
    }
    CHECK_THROWS_AS(load_bundle(dir), DataError);
}

TEST_CASE("a mismatched tensor shape is rejected naming the entry") {
    ModelBundle b = small_bundle();
    const std::string dir = "/tmp/scengen_bundle_e";
    fs::remove_all(dir);
    save_bundle(b, dir);
    // swap the stored shape of one tensor in the manifest
    const fs::path mpath = fs::path(dir) / "manifest.json";
    nlohmann::json m = nlohmann::json::parse(read_file(mpath));
    for (auto& e : m["blob"]["index"]) {
        if (e["name"] == "gen_S/gen_S.s0.l0.w") {
            e["shape"] = {7, 99};
            break;
        }
    }
    {
        std::ofstream f(mpath);
        f << m.dump(2) << '\n';
    }
    try {
        load_bundle(dir);
        FAIL("expected shape mismatch");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("shape mismatch") != std::string::npos);
        CHECK(what.find("gen_S.s0.l0.w") != std::string::npos);
    }
}

TEST_CASE("unsupported schema versions are rejected") {
    ModelBundle b = small_bundle();
    const std::string dir = "/tmp/scengen_bundle_f";
    fs::remove_all(dir);
    save_bundle(b, dir);
    const fs::path mpath = fs::path(dir) / "manifest.json";
    nlohmann::json m = nlohmann::json::parse(read_file(mpath));
    m["schema_version"] = 999;
    {
        std::ofstream f(mpath);
        f << m.dump(2) << '\n';
    }
    try {
        load_bundle(dir);
        FAIL("expected version error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
}

TEST_CASE("missing bundle parts are reported by name") {
    ModelBundle b;
    b.nets.emplace("gen_S", build_network(gen_s_spec(), 1));
    try {
        b.net("gen_E");
        FAIL("expected missing part error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("gen_E") != std::string::npos);
    }
}
