#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wbk/error.hpp"
#include "wbk/pgm.hpp"
#include "wbk/report.hpp"
#include "wbk/synth.hpp"
#include "wbk/weakbox.hpp"

using namespace wbk;

namespace {

double fraction(const Grid& m) {
  double s = 0.0;
  for (float v : m.data) s += v;
  return s / static_cast<double>(m.size());
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("wbk_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("blob masks are deterministic and binary") {
  const Grid a = gen_blob_mask(5, 64, 1);
  CHECK(a == gen_blob_mask(5, 64, 1));
  CHECK(a != gen_blob_mask(6, 64, 1));
  for (float v : a.data) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("foreground fraction stays in range") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const double f = fraction(gen_blob_mask(seed, 64, 1 + static_cast<int>(seed % 3)));
    REQUIRE(f >= kMinForeground);
    REQUIRE(f <= kMaxForeground);
  }
}

TEST_CASE("two objects in opposite half-planes put the centre in the background") {
  int background = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    background += center_status(gen_blob_mask(seed, 64, 2)).status == CenterKind::Background;
  }
  CHECK(background >= 450);
}

TEST_CASE("shape families") {
  CHECK(parse_shape_family("annulus") == ShapeFamily::Annulus);
  CHECK(parse_shape_family(to_string(ShapeFamily::FusedEllipses)) == ShapeFamily::FusedEllipses);
  CHECK_THROWS_AS(parse_shape_family("square"), Error);
  int ring_background = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ring_background += center_status(gen_blob_mask(seed, 64, 1, ShapeFamily::Annulus)).status == CenterKind::Background;
  }
  CHECK(ring_background >= 45);
}

TEST_CASE("noise-free rendering has two levels") {
  const Grid m = gen_blob_mask(3, 32, 1);
  const Grid img = render_image(m, 3, 0.0f);
  std::set<float> levels(img.data.begin(), img.data.end());
  CHECK(levels.size() == 2);
  for (std::size_t k = 0; k < m.size(); ++k) CHECK(img.data[k] == doctest::Approx(m.data[k] > 0 ? 0.7 : 0.3));
}

TEST_CASE("foreground is brighter than background at noise 0.3") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Grid m = gen_blob_mask(seed, 32, 1);
    const Grid img = render_image(m, seed, 0.3f);
    double fg = 0, bg = 0;
    int nf = 0, nb = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m.data[k] > 0) {
        fg += img.data[k];
        ++nf;
      } else {
        bg += img.data[k];
        ++nb;
      }
    }
    REQUIRE(fg / nf > bg / nb);
  }
}

TEST_CASE("samples carry the tight box of their mask") {
  DatasetSpec spec;
  spec.count = 6;
  spec.max_objects = 3;
  spec.size = 32;
  const std::vector<Sample> data = generate_dataset(spec);
  REQUIRE(data.size() == 6);
  for (const Sample& s : data) {
    CHECK(s.weak_box == gt_mask_to_boxmask(s.gt_mask));
    CHECK(s.n_objects >= 1);
    CHECK(s.n_objects <= 3);
  }
  DatasetSpec tail = spec;
  tail.first = 4;
  tail.count = 2;
  CHECK(generate_dataset(tail)[0].gt_mask == data[4].gt_mask);
}

TEST_CASE("dataset spec validation and text form") {
  DatasetSpec spec;
  spec.noise = 0.6f;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.max_objects = 5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.family = ShapeFamily::Annulus;
  spec.seed = 9;
  spec.noise = 0.1f;
  CHECK(parse_spec(format_spec(spec)) == spec);
}

TEST_CASE("pgm encoding") {
  const Grid white(2, 3, 1.0f);
  const std::string bytes = encode_pgm(white);
  CHECK(bytes.size() == 11 + 6);  // header plus one byte per pixel
  CHECK(bytes.substr(0, 11) == "P5\n3 2\n255\n");

  Grid g(5, 7);
  for (std::size_t k = 0; k < g.size(); ++k) g.data[k] = static_cast<float>(k % 256) / 255.0f;
  CHECK(decode_pgm(encode_pgm(g)) == g);
  CHECK(encode_pgm(decode_pgm(encode_pgm(g))) == encode_pgm(g));

  CHECK(decode_pgm("P5\n# comment\n2 1\n255\n\x10\x20") == Grid(1, 2, {16 / 255.0f, 32 / 255.0f}));
}

TEST_CASE("pgm errors") {
  auto code = [](const std::string& bytes) {
    try {
      decode_pgm(bytes);
    } catch (const PgmError& e) {
      return static_cast<int>(e.code());
    }
    return -1;
  };
  CHECK(code("P2\n2 2\n255\n1 2 3 4") == static_cast<int>(PgmErrorCode::Format));
  CHECK(code("P5\n2 2\n255\nab") == static_cast<int>(PgmErrorCode::Truncated));
  CHECK(code("P5\n2 2\n65535\nabcdefgh") == static_cast<int>(PgmErrorCode::Maxval));
  CHECK_THROWS_AS(read_pgm("/nonexistent/file.pgm"), PgmError);
}

TEST_CASE("dataset directory roundtrip") {
  DatasetSpec spec;
  spec.count = 3;
  spec.size = 16;
  spec.max_objects = 2;
  const std::vector<Sample> data = generate_dataset(spec);
  const auto dir = scratch("dataset");
  write_dataset(dir, spec, data);
  const LoadedDataset back = read_dataset(dir);
  CHECK(back.spec == spec);
  REQUIRE(back.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.samples[i].gt_mask == data[i].gt_mask);
    CHECK(back.samples[i].weak_box == data[i].weak_box);
    CHECK(encode_pgm(back.samples[i].image) == encode_pgm(data[i].image));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("metric reports") {
  CHECK(format_metrics_report({}, ReportFormat::Csv) == "sample_id,dsc,iou_fg,miou,acc,sen,spe,hd95\n");
  CHECK(format_metrics_report({}, ReportFormat::Jsonl).empty());

  const std::vector<MetricsRow> rows{{2, 0.5, 0.25, 0.6, 0.9, 0.8, 0.95, 3.5}, {1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0}};
  const std::string csv = format_metrics_report(rows, ReportFormat::Csv);
  CHECK(csv ==
        "sample_id,dsc,iou_fg,miou,acc,sen,spe,hd95\n"
        "1,1.000000,1.000000,1.000000,1.000000,1.000000,1.000000,0.000000\n"
        "2,0.500000,0.250000,0.600000,0.900000,0.800000,0.950000,3.500000\n");
  const std::string jsonl = format_metrics_report(rows, ReportFormat::Jsonl);
  CHECK(jsonl.find("{\"sample_id\":1,\"dsc\":1.000000") == 0);
  CHECK(jsonl.find("\"hd95\":3.500000}") != std::string::npos);

  const std::vector<MetricsRow> parsed = parse_metrics_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].sample_id == 2);
  CHECK(parsed[1].miou == doctest::Approx(0.6));

  // Both formats carry the same values.
  std::istringstream lines(jsonl);
  std::string line;
  std::size_t k = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    REQUIRE(k < parsed.size());
    CHECK(j["sample_id"].get<int>() == parsed[k].sample_id);
    CHECK(j["dsc"].get<double>() == parsed[k].dsc);
    CHECK(j["iou_fg"].get<double>() == parsed[k].iou_fg);
    CHECK(j["miou"].get<double>() == parsed[k].miou);
    CHECK(j["acc"].get<double>() == parsed[k].acc);
    CHECK(j["sen"].get<double>() == parsed[k].sen);
    CHECK(j["spe"].get<double>() == parsed[k].spe);
    CHECK(j["hd95"].get<double>() == parsed[k].hd95);
    ++k;
  }
  CHECK(k == parsed.size());
  CHECK(parse_report_format("jsonl") == ReportFormat::Jsonl);
  CHECK_THROWS_AS(parse_report_format("xml"), Error);
}
