#include <cmath>
#include <sstream>

#include "doctest.h"
#include "loraplan/errors.hpp"
#include "loraplan/topology.hpp"

using namespace loraplan;

TEST_CASE("uniform disk placement") {
    auto t = place_uniform_disk(500, 12000, 1);
    CHECK(t.devices.size() == 500);
    CHECK(t.gateways.size() == 1);
    CHECK(t.gateways[0].position.x == 0.0);
    for (std::size_t i = 0; i < t.devices.size(); ++i) {
        CHECK(t.devices[i].id == static_cast<int>(i));
        REQUIRE(t.devices[i].position.has_value());
        CHECK(distance(*t.devices[i].position, {0, 0}) <= 12000.0);
    }
    auto again = place_uniform_disk(500, 12000, 1);
    CHECK(again.devices[17].position->x == t.devices[17].position->x);
    auto other = place_uniform_disk(500, 12000, 2);
    CHECK(other.devices[17].position->x != t.devices[17].position->x);
    CHECK_THROWS_AS(place_uniform_disk(0, 12000, 1), std::domain_error);
}

TEST_CASE("ring placement stays in the annulus") {
    auto t = place_ring(300, 11400, 12000, 5);
    for (const auto& ed : t.devices) {
        const double r = distance(*ed.position, {0, 0});
        CHECK(r >= 11400.0);
        CHECK(r <= 12000.0);
    }
    CHECK_THROWS_AS(place_ring(10, 12000, 12000, 5), std::domain_error);
}

TEST_CASE("square placement stays in the square") {
    auto t = place_uniform_square(200, 36000, 3);
    CHECK(t.gateways.empty());
    CHECK(t.cell_radius_m == 18000.0);
    for (const auto& ed : t.devices) {
        CHECK(std::fabs(ed.position->x) <= 18000.0);
        CHECK(std::fabs(ed.position->y) <= 18000.0);
    }
}

TEST_CASE("gateway grids and rows are centered") {
    auto grid = place_gateway_grid(3, 1000);
    REQUIRE(grid.size() == 9);
    CHECK(grid[0].id == 0);
    CHECK(grid[0].position.x == -1000.0);
    CHECK(grid[0].position.y == -1000.0);
    CHECK(grid[4].position.x == 0.0);
    CHECK(grid[4].position.y == 0.0);
    CHECK(grid[8].position.x == 1000.0);

    auto row = place_gateway_row(3, 6000);
    REQUIRE(row.size() == 3);
    CHECK(row[0].position.x == -6000.0);
    CHECK(row[1].position.x == 0.0);
    CHECK(row[2].position.x == 6000.0);
    for (const auto& gw : row) CHECK(gw.position.y == 0.0);
}

TEST_CASE("gateway triangle is equilateral around the origin") {
    auto tri = place_gateway_triangle(12000);
    REQUIRE(tri.size() == 3);
    double cx = 0, cy = 0;
    for (const auto& gw : tri) {
        cx += gw.position.x;
        cy += gw.position.y;
    }
    CHECK(cx == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(cy == doctest::Approx(0.0).epsilon(1e-9));
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
            const double dx = tri[a].position.x - tri[b].position.x;
            const double dy = tri[a].position.y - tri[b].position.y;
            CHECK(std::hypot(dx, dy) == doctest::Approx(12000.0).epsilon(1e-12));
        }
    CHECK_THROWS_AS(place_gateway_triangle(0), std::domain_error);
}

TEST_CASE("mean rssi from the path loss model") {
    Topology t;
    t.gateways.push_back({0, {0, 0}});
    EndDevice ed;
    ed.id = 0;
    ed.position = Vec2{12000, 0};
    t.devices.push_back(ed);
    compute_mean_rssi(t, 14.0, PathLossModel{});
    CHECK(t.devices[0].mean_rssi.at(0) ==
          doctest::Approx(-123.83651638687022).epsilon(1e-12));
}

TEST_CASE("strongest gateway breaks ties toward the lower id") {
    EndDevice ed;
    ed.mean_rssi = {{3, -80.0}, {1, -70.0}, {2, -70.0}};
    CHECK(strongest_gateway(ed) == 1);
}

TEST_CASE("closest-gateway partition covers every gateway") {
    auto t = place_uniform_disk(50, 10000, 9);
    t.gateways = place_gateway_row(3, 8000);
    compute_mean_rssi(t, 14.0, PathLossModel{});
    auto part = partition_by_closest_gw(t);
    CHECK(part.size() == 3);
    std::size_t total = 0;
    for (auto& [gw, ids] : part) total += ids.size();
    CHECK(total == 50);
}

TEST_CASE("coverage set respects the margin") {
    Thresholds thr;  // SF12 sensitivity -137
    EndDevice ed;
    ed.mean_rssi = {{0, -130.0}, {1, -136.5}, {2, -140.0}};
    auto cov = coverage_set(ed, thr);
    CHECK(cov == std::set<int>{0, 1});
    thr.sensitivity_margin_db = 1.0;
    CHECK(coverage_set(ed, thr) == std::set<int>{0});
}

TEST_CASE("ring index against configured bounds") {
    Topology t;
    t.gateways.push_back({0, {0, 0}});
    t.cell_radius_m = 12000;
    t.ring_bounds = {3000, 6000, 9000, 12000};
    EndDevice ed;
    ed.id = 0;
    ed.position = Vec2{4500, 0};
    ed.mean_rssi[0] = -100;
    t.devices.push_back(ed);
    CHECK(ring_index(t, t.devices[0]) == 1);
    t.devices[0].position = Vec2{12000, 0};
    CHECK(ring_index(t, t.devices[0]) == 3);
    t.ring_bounds.clear();
    CHECK_FALSE(ring_index(t, t.devices[0]).has_value());
}

TEST_CASE("trace round trip") {
    auto t = place_uniform_disk(40, 12000, 11);
    t.gateways = place_gateway_row(2, 9000);
    compute_mean_rssi(t, 14.0, PathLossModel{});
    std::ostringstream out;
    export_rssi_trace(t, out);

    std::istringstream in(out.str());
    auto back = import_rssi_trace(in);
    REQUIRE(back.devices.size() == t.devices.size());
    REQUIRE(back.gateways.size() == 2);
    for (std::size_t i = 0; i < t.devices.size(); ++i) {
        CHECK(back.devices[i].id == t.devices[i].id);
        for (auto [gw, v] : t.devices[i].mean_rssi)
            CHECK(back.devices[i].mean_rssi.at(gw) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("trace import rejects malformed input") {
    SUBCASE("bad header") {
        std::istringstream in("wrong,header,line\n0,0,-100\n");
        CHECK_THROWS_AS(import_rssi_trace(in), data_error);
    }
    SUBCASE("duplicate pair carries the line number") {
        std::istringstream in(
            "device_id,gateway_id,mean_rssi_dbm\n7,0,-100\n7,0,-101\n");
        CHECK_THROWS_WITH_AS(import_rssi_trace(in), doctest::Contains("line 3"), data_error);
    }
    SUBCASE("empty body") {
        std::istringstream in("device_id,gateway_id,mean_rssi_dbm\n");
        CHECK_THROWS_AS(import_rssi_trace(in), data_error);
    }
    SUBCASE("non-numeric field") {
        std::istringstream in("device_id,gateway_id,mean_rssi_dbm\nx,0,-100\n");
        CHECK_THROWS_AS(import_rssi_trace(in), data_error);
    }
}

TEST_CASE("topology csv export") {
    Topology t;
    t.gateways.push_back({0, {0, 0}});
    EndDevice ed;
    ed.id = 4;
    ed.position = Vec2{100, -200};
    ed.mean_rssi[0] = -90;
    t.devices.push_back(ed);
    std::map<int, int> assignment = {{4, 9}};
    std::ostringstream out;
    export_topology_csv(t, &assignment, out);
    CHECK(out.str() ==
          "device_id,x_m,y_m,closest_gw,assigned_sf\n4,100,-200,0,9\n");
}
