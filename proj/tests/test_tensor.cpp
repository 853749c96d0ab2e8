#include <doctest.h>

#include <set>

#include "wbk/error.hpp"
#include "wbk/gradcheck.hpp"
#include "wbk/losses.hpp"
#include "wbk/nets.hpp"
#include "wbk/tensor.hpp"

using namespace wbk;

TEST_CASE("untracked ops do not record") {
  const Tensor a(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor b = add(a, a);
  CHECK_FALSE(b.on_tape());
  CHECK(b.to_grid() == Grid(2, 2, {2, 4, 6, 8}));
  CHECK_THROWS_AS(add(a, Tensor(Shape{1, 1, 2, 3})), ShapeError);
}

TEST_CASE("backward accumulates into watched leaves only") {
  Tape tape;
  Tensor x(Shape{1, 1, 1, 3}, std::vector<float>{1, -2, 3});
  Tensor y(Shape{1, 1, 1, 3}, std::vector<float>{4, 5, 6});
  tape.watch(x);
  const Tensor loss = sum(mul(x, y));
  CHECK(loss.on_tape());
  tape.backward(loss);
  CHECK(x.has_grad());
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{4, 5, 6});
  CHECK_FALSE(y.has_grad());
  CHECK(tape.size() == 0);
}

TEST_CASE("reduce_max routes the gradient to the first argmax") {
  Tape tape;
  Tensor x(Shape{1, 1, 2, 3}, std::vector<float>{1, 5, 5, 2, 0, 7});
  tape.watch(x);
  const Tensor rows = reduce_max(x, Axis::Cols);  // (1,1,2,1)
  CHECK(rows.to_grid() == Grid(2, 1, {5, 7}));
  tape.backward(sum(rows));
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{0, 1, 0, 0, 0, 1});
}

TEST_CASE("replicate padding repeats edge values") {
  const Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor k(Shape{1, 1, 3, 3});
  k.mutable_values()[0] = 1.0f;  // picks the up-left neighbour
  const Tensor zero = conv2d(x, k, Tensor(), {1, 1, 1, false});
  const Tensor edge = conv2d(x, k, Tensor(), {1, 1, 1, true});
  CHECK(zero.to_grid() == Grid(2, 2, {0, 0, 0, 1}));
  CHECK(edge.to_grid() == Grid(2, 2, {1, 1, 1, 1}));
}

TEST_CASE("gradcheck suite passes and names each case once") {
  GradcheckOptions opt;
  opt.instances = 5;
  const GradcheckReport r = run_gradcheck(opt);
  CHECK(r.all_passed());
  const std::vector<std::string> names = gradcheck_case_names();
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  REQUIRE(r.cases.size() == names.size());
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(r.cases[i].name == names[i]);
  CHECK(r.format().find("conv2d") != std::string::npos);
}

TEST_CASE("gradcheck reports a corrupted case by name") {
  GradcheckOptions opt;
  opt.instances = 3;
  opt.corrupt = "sigmoid";
  const GradcheckReport r = run_gradcheck(opt);
  CHECK_FALSE(r.all_passed());
  for (const GradcheckCase& c : r.cases) CHECK(c.passed == (c.name != "sigmoid"));
  CHECK(r.format().find("FAIL sigmoid ") != std::string::npos);
}

TEST_CASE("every op recorded by the networks and losses has a gradcheck case") {
  NetConfig cfg;
  ModelParams p = init_segmenter(cfg, 1);
  p.merge_from(init_refiner(cfg, 1), "refine.", false);
  Tape tape;
  for (auto& [name, param] : p.params()) tape.watch(param.value);
  const Tensor image(Shape{2, 1, 16, 16}, 0.5f);
  const std::vector<BoxCoords> boxes{{2, 2, 9, 9}, {0, 0, 15, 15}};
  const ScalePair pair = seg_two_scales(image, bilinear_resize(image, 12, 12), boxes, p, cfg, true);
  const RefineIO ref = detail_refine_forward(pair.primary.logits, image, p, true);
  const BoxMask b{rasterize({2, 2, 9, 9}, 16, 16)};
  const Tensor q1 = slice_batch(pair.primary.prob, 0);
  const Tensor q2 = slice_batch(bilinear_resize(pair.secondary.prob, 16, 16), 0);
  const BranchOutput t = mm2b_branch(q1, CenterKind::Background, CenterStatus{CenterKind::Background, 5, 5, 5.0, 5.0});
  const BranchOutput f = mm2b_branch(q1, CenterKind::Foreground, CenterStatus{});
  const Tensor loss = add(add(branch_loss(t.mask, b), branch_loss(f.mask, b)),
                          add(sc_loss(q1, q2, b), detail_refine_loss(slice_batch(sigmoid(ref.s_refined), 0), b.grid)));
  const std::vector<std::string> names = gradcheck_case_names();
  for (std::string_view op : tape.op_names()) {
    bool covered = false;
    for (const std::string& n : names) covered = covered || n.rfind(op, 0) == 0;
    INFO("op: ", std::string(op));
    CHECK(covered);
  }
  tape.backward(loss);
}
