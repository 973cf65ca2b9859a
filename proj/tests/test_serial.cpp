#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lqt/serial.hpp"
#include "support/test_util.hpp"

using namespace lqt;
namespace fs = std::filesystem;

TEST_CASE("array round trip preserves f32 payload bitwise") {
  Array<float> a = test::random_array({7, 5}, 61).cast<float>();
  std::stringstream ss;
  io::write_array(ss, a);
  Array<float> b = io::read_array<float>(ss);
  REQUIRE(b.shape() == a.shape());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);

  // double arrays go through f32 on disk
  Array<double> d = test::random_array({3}, 62);
  std::stringstream ss2;
  io::write_array(ss2, d);
  Array<double> d2 = io::read_array<double>(ss2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d2[i] == doctest::Approx(d[i]).epsilon(1e-6));
    CHECK(d2[i] == static_cast<double>(static_cast<float>(d[i])));
  }
}

TEST_CASE("header layout is stable") {
  Array<float> a = Array<float>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  std::stringstream ss;
  io::write_array(ss, a);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 8 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "LQT1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);  // rank, little-endian
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // dim0
  CHECK(static_cast<unsigned char>(bytes[12]) == 3); // dim1
}

TEST_CASE("corrupt and truncated files are rejected") {
  Array<float> a = test::random_array({4, 4}, 63).cast<float>();
  std::stringstream ss;
  io::write_array(ss, a);
  std::string bytes = ss.str();

  {
    std::stringstream bad(std::string("XQT1") + bytes.substr(4));
    CHECK_THROWS_AS(io::read_array<float>(bad), IoError);
  }
  {
    std::stringstream trunc(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(io::read_array<float>(trunc), IoError);
  }
  {
    std::stringstream header_only(bytes.substr(0, 6));
    CHECK_THROWS_AS(io::read_array<float>(header_only), IoError);
  }
}

TEST_CASE("file helpers") {
  const fs::path dir = fs::temp_directory_path() / "lqt_serial_test";
  fs::create_directories(dir);
  const fs::path p = dir / "a.lqt";
  Array<float> a = test::random_array({6, 2}, 64).cast<float>();
  io::save_array(p, a);
  Array<float> b = io::load_array<float>(p);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  CHECK_THROWS_AS(io::load_array<float>(dir / "missing.lqt"), IoError);
  fs::remove_all(dir);
}
