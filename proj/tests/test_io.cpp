#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "delayformer/checkpoint.hpp"
#include "delayformer/csv.hpp"
#include "delayformer/errors.hpp"
#include "delayformer/model.hpp"
#include "delayformer/run_config.hpp"

using namespace delayformer;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("delayformer_test_" + name);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spew(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelConfig io_config() {
    ModelConfig cfg;
    cfg.n_channels = 2;
    cfg.w_in = 12;
    cfg.horizon = 4;
    cfg.embedding_dim = 5;
    cfg.p1 = 4;
    cfg.p2 = 5;
    cfg.d_model = 8;
    cfg.n_blocks = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.seed = 21;
    return cfg;
}

NormalizerStats io_stats() {
    NormalizerStats s;
    s.mean = {0.25, -3.5};
    s.stddev = {1.5, 0.75};
    return s;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("format_double round trips exactly") {
    for (double v : {0.1, -0.0, 1.0 / 3.0, 1e-300, 1.7976931348623157e308, 42.0}) {
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
}

TEST_CASE("csv round trip is bit exact") {
    MultivariateSeries s;
    s.channel_names = {"x1", "y1"};
    s.values = Tensor::matrix({{0.1, 2.0 / 3.0, 1e-17}, {-1e300, 3.0, -0.25}});
    s.dt = 0.5;
    const fs::path p = temp_file("roundtrip.csv");
    save_csv(p, s);
    const MultivariateSeries r = load_csv(p);
    CHECK(r.channel_names == s.channel_names);
    REQUIRE(r.values.same_shape(s.values));
    for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(r.values[i] == s.values[i]);
    fs::remove(p);
}

TEST_CASE("csv layout is one row per time step") {
    MultivariateSeries s;
    s.channel_names = {"a", "b"};
    s.values = Tensor::matrix({{1, 2}, {3, 4}});
    const fs::path p = temp_file("layout.csv");
    save_csv(p, s);
    const std::string text = slurp(p);
    CHECK(text == "a,b\n1,3\n2,4\n");
    fs::remove(p);
}

TEST_CASE("csv load errors name the row") {
    const fs::path p = temp_file("bad.csv");

    spew(p, "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(p), ParseError);
    try {
        load_csv(p);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    spew(p, "a,b\n1,oops\n");
    CHECK_THROWS_AS(load_csv(p), ParseError);

    spew(p, "a,b\n1,nan\n");
    CHECK_THROWS_AS(load_csv(p), ParseError);

    spew(p, "a,b\n");
    CHECK_THROWS_AS(load_csv(p), ParseError);  // no data rows

    spew(p, "a,a\n1,2\n");
    CHECK_THROWS_AS(load_csv(p), ContractError);  // duplicate channel names

    fs::remove(p);
    CHECK_THROWS_AS(load_csv(p), IoError);
}

TEST_CASE("csv tolerates a trailing newline and CRLF") {
    const fs::path p = temp_file("crlf.csv");
    spew(p, "a,b\r\n1,2\r\n3,4\r\n");
    const MultivariateSeries s = load_csv(p);
    CHECK(s.channels() == 2);
    CHECK(s.steps() == 2);
    CHECK(s.at(1, 1) == 4.0);
    fs::remove(p);
}

TEST_CASE("save_table_csv writes header plus rows") {
    const fs::path p = temp_file("table.csv");
    save_table_csv(p, {"epoch", "loss"}, Tensor::matrix({{0, 0.5}, {1, 0.25}}));
    CHECK(slurp(p) == "epoch,loss\n0,0.5\n1,0.25\n");
    fs::remove(p);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const ModelConfig cfg = io_config();
    const ModelParams params = init_params(cfg);
    const fs::path p = temp_file("ckpt.dlfm");
    save_checkpoint(p, cfg, params, io_stats());

    const Checkpoint loaded = load_checkpoint(p);
    CHECK(loaded.config.n_channels == cfg.n_channels);
    CHECK(loaded.config.d_model == cfg.d_model);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.stats.mean == io_stats().mean);
    CHECK(loaded.stats.stddev == io_stats().stddev);

    bool equal = true;
    std::vector<const Tensor*> lhs, rhs;
    params.for_each([&](const std::string&, const Tensor& t) { lhs.push_back(&t); });
    loaded.params.for_each([&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
    REQUIRE(lhs.size() == rhs.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        REQUIRE(lhs[i]->same_shape(*rhs[i]));
        for (std::size_t j = 0; j < lhs[i]->size(); ++j)
            equal = equal && (*lhs[i])[j] == (*rhs[i])[j];
    }
    CHECK(equal);
    // the fixed positional table is rebuilt identically from the config
    for (std::size_t i = 0; i < params.pe.size(); ++i)
        CHECK(loaded.params.pe[i] == params.pe[i]);
    fs::remove(p);
}

TEST_CASE("checkpoint corruption detection") {
    const ModelConfig cfg = io_config();
    const ModelParams params = init_params(cfg);
    const fs::path good_path = temp_file("good.dlfm");
    save_checkpoint(good_path, cfg, params, io_stats());
    const std::string good = slurp(good_path);
    const fs::path p = temp_file("corrupt.dlfm");

    SUBCASE("short file") {
        spew(p, good.substr(0, 8));
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        spew(p, bad);
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 99;  // little-endian low byte of the version word
        spew(p, bad);
        CHECK_THROWS_AS(load_checkpoint(p), UnsupportedVersionError);
    }
    SUBCASE("header is not JSON") {
        std::string bad = good;
        bad[12] = 'X';  // first header byte: was '{'
        spew(p, bad);
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("header length past end of file") {
        std::string bad = good;
        bad[8] = static_cast<char>(0xFF);
        bad[9] = static_cast<char>(0xFF);
        spew(p, bad);
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("truncated payload") {
        spew(p, good.substr(0, good.size() - 8));
        CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(temp_file("nope.dlfm")), IoError);
    }
    fs::remove(good_path);
    fs::remove(p);
}

TEST_CASE("unsupported version is also a format error") {
    // callers that only care about "can't read this" may catch FormatError
    const UnsupportedVersionError e("v9");
    const FormatError* base = &e;
    CHECK(std::string(base->what()) == "v9");
}

TEST_CASE("run config parses a full document") {
    const std::string text = R"({
        "model": {"n_channels": 2, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2,
                  "d_ff": 16, "seed": 3},
        "train": {"learning_rate": 0.01, "batch_size": 8, "max_epochs": 5,
                  "patience": 2, "stride": 3, "seed": 4, "split_ratios": [0.6, 0.2, 0.2]},
        "data": {"csv": "series.csv", "channels": ["x1", "y1"]},
        "output_dir": "runs/a"
    })";
    const RunConfig rc = parse_run_config(text);
    CHECK(rc.model.n_channels == 2);
    CHECK(rc.model.d_ff == 16);
    CHECK(rc.train.learning_rate == 0.01);
    CHECK(rc.train.stride == 3);
    CHECK(rc.train.split_ratios[1] == 0.2);
    REQUIRE(rc.data.csv_path.has_value());
    CHECK(*rc.data.csv_path == "series.csv");
    CHECK(rc.data.channels == std::vector<std::string>{"x1", "y1"});
    CHECK(rc.output_dir == "runs/a");
}

TEST_CASE("run config defaults for optional sections") {
    const std::string text = R"({
        "model": {"n_channels": 3, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2, "d_ff": 16},
        "data": {"lorenz": {"n_subsystems": 1, "n_points": 200}}
    })";
    const RunConfig rc = parse_run_config(text);
    CHECK(rc.model.seed == 0);
    CHECK(rc.train.batch_size == TrainConfig{}.batch_size);
    CHECK(rc.output_dir == ".");
    REQUIRE(rc.data.lorenz.has_value());
    CHECK(rc.data.lorenz->n_subsystems == 1);
    CHECK(rc.data.lorenz->rho == 28.0);  // generator defaults fill the rest
}

TEST_CASE("run config rejects unknown keys with their path") {
    const std::string text = R"({
        "model": {"n_channels": 3, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2,
                  "d_ff": 16, "warmup": 10},
        "data": {"lorenz": {}}
    })";
    CHECK_THROWS_AS(parse_run_config(text), ParseError);
    try {
        parse_run_config(text);
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("warmup") != std::string::npos);
        CHECK(msg.find("model") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_run_config(R"({"data": {"lorenz": {}}, "modle": {}})"), ParseError);
}

TEST_CASE("run config requires exactly one data source") {
    const std::string both = R"({
        "model": {"n_channels": 3, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2, "d_ff": 16},
        "data": {"csv": "a.csv", "lorenz": {}}
    })";
    CHECK_THROWS_AS(parse_run_config(both), ParseError);

    const std::string neither = R"({
        "model": {"n_channels": 3, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2, "d_ff": 16},
        "data": {}
    })";
    CHECK_THROWS_AS(parse_run_config(neither), ParseError);

    const std::string missing_model = R"({"data": {"lorenz": {}}})";
    CHECK_THROWS_AS(parse_run_config(missing_model), ParseError);

    CHECK_THROWS_AS(parse_run_config("not json at all"), ParseError);
}

TEST_CASE("run config validates field types") {
    const std::string bad_ratio = R"({
        "model": {"n_channels": 3, "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2, "d_ff": 16},
        "train": {"split_ratios": [0.5, 0.5]},
        "data": {"lorenz": {}}
    })";
    CHECK_THROWS_AS(parse_run_config(bad_ratio), ParseError);

    const std::string bad_type = R"({
        "model": {"n_channels": "three", "w_in": 12, "horizon": 4, "embedding_dim": 5,
                  "p1": 4, "p2": 5, "d_model": 8, "n_blocks": 1, "n_heads": 2, "d_ff": 16},
        "data": {"lorenz": {}}
    })";
    CHECK_THROWS_AS(parse_run_config(bad_type), ParseError);
}

TEST_CASE("select_channels subsets and reorders") {
    MultivariateSeries s;
    s.channel_names = {"x1", "y1", "z1"};
    s.values = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
    const MultivariateSeries sub = select_channels(s, {"z1", "x1"});
    CHECK(sub.channels() == 2);
    CHECK(sub.channel_names[0] == "z1");
    CHECK(sub.at(0, 1) == 6.0);
    CHECK(sub.at(1, 0) == 1.0);
    CHECK_THROWS_AS(select_channels(s, {"w9"}), ContractError);
}

TEST_CASE("load_series runs the generator inline") {
    DataConfig data;
    data.lorenz = LorenzConfig{};
    data.lorenz->n_subsystems = 1;
    data.lorenz->n_points = 50;
    data.channels = {"z1"};
    const MultivariateSeries s = load_series(data);
    CHECK(s.channels() == 1);
    CHECK(s.steps() == 50);
    CHECK(s.channel_names[0] == "z1");
}

TEST_CASE("atomic_write_text replaces content wholesale") {
    const fs::path p = temp_file("atomic.txt");
    atomic_write_text(p, "first");
    atomic_write_text(p, "second");
    CHECK(slurp(p) == "second");
    fs::remove(p);
}

}  // TEST_SUITE
