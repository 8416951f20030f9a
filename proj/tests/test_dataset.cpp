#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <set>

#include "imae/dataset.hpp"
#include "imae/image_io.hpp"
#include "test_util.hpp"

using namespace imae;
using namespace imae::data;
namespace fs = std::filesystem;

namespace {
DatasetConfig tiny_synth(i64 size = 40, u64 seed = 0) {
    DatasetConfig c;
    c.name = "synthetic";
    c.size = size;
    c.num_classes = 4;
    c.image_h = c.image_w = 16;
    c.channels = 3;
    c.seed = seed;
    return c;
}
}  // namespace

TEST_CASE("synthetic dataset is byte-identical across loads and iterations") {
    Dataset a = Dataset::load(tiny_synth());
    Dataset b = Dataset::load(tiny_synth());
    IteratorOptions opt;
    opt.batch_size = 8;
    opt.seed = 3;
    opt.epoch = 2;
    BatchIterator ia(a, opt), ib(b, opt);
    ImageBatch xa, xb;
    while (ia.next(xa)) {
        REQUIRE(ib.next(xb));
        CHECK(std::memcmp(xa.pixels.data(), xb.pixels.data(),
                          static_cast<size_t>(xa.pixels.size()) * sizeof(double)) == 0);
        CHECK(xa.ids == xb.ids);
        CHECK(xa.labels == xb.labels);
    }
    CHECK_FALSE(ib.next(xb));
}

TEST_CASE("pixels are finite and in range with labels in range") {
    Dataset d = Dataset::load(tiny_synth(64, 9));
    auto batch = d.make_batch({0, 1, 2, 63});
    batch.validate(d.num_classes());
    for (i64 i = 0; i < batch.pixels.size(); ++i) {
        CHECK(batch.pixels[i] >= 0.0);
        CHECK(batch.pixels[i] <= 1.0);
    }
}

TEST_CASE("train and val splits are disjoint by ids") {
    DatasetConfig ct = tiny_synth();
    DatasetConfig cv = tiny_synth();
    cv.split = "val";
    Dataset t = Dataset::load(ct), v = Dataset::load(cv);
    std::set<i64> train_ids(t.ids().begin(), t.ids().end());
    for (i64 id : v.ids()) CHECK(train_ids.count(id) == 0);
}

TEST_CASE("epoch shuffles differ but cover the dataset") {
    Dataset d = Dataset::load(tiny_synth(32));
    IteratorOptions o1, o2;
    o1.batch_size = o2.batch_size = 32;
    o1.epoch = 0;
    o2.epoch = 1;
    BatchIterator i1(d, o1), i2(d, o2);
    ImageBatch b1, b2;
    REQUIRE(i1.next(b1));
    REQUIRE(i2.next(b2));
    CHECK(b1.ids != b2.ids);
    std::set<i64> s1(b1.ids.begin(), b1.ids.end());
    CHECK(s1.size() == 32);
}

TEST_CASE("folder dataset with 100 images yields 3 batches of 32 with drop-last") {
    const fs::path root = fs::temp_directory_path() / "imae_test_folder_ds";
    fs::remove_all(root);
    Rng rng(31);
    const char* classes[2] = {"cats", "dogs"};
    for (int c = 0; c < 2; ++c) {
        fs::create_directories(root / "train" / classes[c]);
        for (int i = 0; i < 50; ++i) {
            io::Image img;
            img.h = img.w = 8;
            img.c = 3;
            img.px.resize(8 * 8 * 3);
            for (auto& v : img.px) v = rng.uniform();
            char name[32];
            std::snprintf(name, sizeof(name), "img%03d.bmp", i);
            io::write_bmp((root / "train" / classes[c] / name).string(), img);
        }
    }
    DatasetConfig cfg;
    cfg.name = "folder";
    cfg.root = root.string();
    cfg.split = "train";
    cfg.channels = 3;
    Dataset d = Dataset::load(cfg);
    CHECK(d.size() == 100);
    CHECK(d.num_classes() == 2);

    IteratorOptions opt;
    opt.batch_size = 32;
    opt.drop_last = true;
    BatchIterator it(d, opt);
    CHECK(it.num_batches() == 3);  // floor(100/32)
    ImageBatch b;
    int n = 0;
    while (it.next(b)) {
        CHECK(b.batch() == 32);
        ++n;
    }
    CHECK(n == 3);

    opt.drop_last = false;
    BatchIterator it2(d, opt);
    CHECK(it2.num_batches() == 4);
    fs::remove_all(root);
}

TEST_CASE("missing dataset directory raises a data error with a hint") {
    DatasetConfig cfg;
    cfg.name = "folder";
    cfg.root = "/nonexistent/imae/path";
    try {
        Dataset::load(cfg);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("hint") != std::string::npos);
    }
}

TEST_CASE("augmentation is deterministic given the iterator seed") {
    Dataset d = Dataset::load(tiny_synth(16));
    IteratorOptions opt;
    opt.batch_size = 8;
    opt.augment_crop = true;
    opt.augment_hflip = true;
    opt.seed = 5;
    BatchIterator i1(d, opt), i2(d, opt);
    ImageBatch a, b;
    REQUIRE(i1.next(a));
    REQUIRE(i2.next(b));
    CHECK(std::memcmp(a.pixels.data(), b.pixels.data(),
                      static_cast<size_t>(a.pixels.size()) * sizeof(double)) == 0);
    for (i64 i = 0; i < a.pixels.size(); ++i) {
        CHECK(a.pixels[i] >= 0.0);
        CHECK(a.pixels[i] <= 1.0);
    }
}

TEST_CASE("bmp and ppm round trips preserve 8-bit content") {
    Rng rng(33);
    io::Image img;
    img.h = 5;
    img.w = 7;  // width with padding
    img.c = 3;
    img.px.resize(5 * 7 * 3);
    for (auto& v : img.px) v = rng.randint(256) / 255.0;
    const auto dir = fs::temp_directory_path();
    io::write_bmp((dir / "imae_t.bmp").string(), img);
    io::Image back = io::read_bmp((dir / "imae_t.bmp").string());
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (size_t i = 0; i < img.px.size(); ++i)
        CHECK(back.px[i] == doctest::Approx(img.px[i]).epsilon(1e-9));
    io::write_ppm((dir / "imae_t.ppm").string(), img);
    io::Image back2 = io::read_ppm((dir / "imae_t.ppm").string());
    for (size_t i = 0; i < img.px.size(); ++i)
        CHECK(back2.px[i] == doctest::Approx(img.px[i]).epsilon(1e-9));
}
