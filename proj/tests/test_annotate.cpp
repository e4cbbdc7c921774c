#include <gtest/gtest.h>

#include <thread>

#include "fundaq/annotate/service.hpp"
#include "support/temp_dir.hpp"

using namespace fundaq;
using namespace fundaq::annotate;
using fundaq::testkit::slurp;
using fundaq::testkit::TempDir;
namespace fs = std::filesystem;

namespace {

LabelRecord rec(std::string id, std::string grader, std::int64_t ts, int level) {
    return {std::move(id), std::move(grader), ts, Fundaq8Sheet::uniform(level)};
}

// Image directory with `n` placeholder images img0..img{n-1}.
void make_images(const TempDir& d, int n) {
    fs::create_directories(d / "images");
    for (int i = 0; i < n; ++i) d.write("images/img" + std::to_string(i) + ".png", "png" + std::to_string(i));
}

std::string body_for(const std::string& grader, const std::string& image, const Fundaq8Sheet& s) {
    Json scores = Json::object();
    for (std::size_t a = 0; a < kAttributeCount; ++a) scores[std::string(kAttributeNames[a])] = s.scores[a];
    return Json{{"grader", grader}, {"image_id", image}, {"scores", scores}}.dump();
}

}  // namespace

TEST(LabelLog, EncodeDecodeRoundTrip) {
    auto r = rec("img \"1\"", "g,1", 1700000000, 1);
    r.sheet[Attribute::optic_cup] = 0;
    const auto line = encode_record(r);
    ASSERT_EQ(line.back(), '\n');
    const auto back = decode_record(std::string_view(line).substr(0, line.size() - 1));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, r);
    auto damaged = line.substr(0, line.size() - 1);
    damaged[20] ^= 1;
    EXPECT_FALSE(decode_record(damaged).has_value());
}

TEST(LabelLog, ReplayDropsTornTail) {
    const std::string a = encode_record(rec("a", "g", 1, 2)), b = encode_record(rec("b", "g", 2, 1));
    for (std::size_t cut = 0; cut < b.size(); ++cut) {
        const auto r = replay(a + b.substr(0, cut));
        ASSERT_EQ(r.records.size(), 1u) << cut;
        EXPECT_EQ(r.valid_bytes, a.size());
        EXPECT_EQ(r.torn_tail, cut > 0);
    }
    const auto full = replay(a + b);
    EXPECT_EQ(full.records.size(), 2u);
    EXPECT_FALSE(full.torn_tail);
}

TEST(LabelLog, MidLogCorruptionThrows) {
    std::string a = encode_record(rec("a", "g", 1, 2));
    a[12] = 'X';
    EXPECT_THROW(replay(a + encode_record(rec("b", "g", 2, 1))), StoreError);
}

TEST(LabelLog, StoreTruncatesTornTailAndAppends) {
    TempDir d("ann");
    {
        LabelStore s(d / "labels.log");
        s.append(rec("a", "g", 1, 2));
        s.append(rec("b", "g", 2, 0));
        EXPECT_THROW(s.append(rec("c", "g", 3, 3)), InvalidSheet);
    }
    {
        std::ofstream(d / "labels.log", std::ios::app) << "deadbeef {\"image_id\":";
    }
    {
        LabelStore s(d / "labels.log");
        ASSERT_EQ(s.records().size(), 2u);
        s.append(rec("c", "g", 3, 1));
    }
    const auto r = replay(slurp(d / "labels.log"));
    EXPECT_FALSE(r.torn_tail);
    ASSERT_EQ(r.records.size(), 3u);
    EXPECT_EQ(r.records[2].image_id, "c");
}

TEST(Service, TaskQueueAndSubmit) {
    TempDir d("ann");
    make_images(d, 3);
    AnnotateService svc(d / "images", d / "out" / "labels.log");
    EXPECT_EQ(svc.image_count(), 3u);
    auto t = svc.next_task("g1");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->image_id, "img0");
    EXPECT_EQ(t->image_uri, "/api/images/img0");
    EXPECT_EQ(t->remaining_count, 3u);

    const auto r = svc.submit("g1", "img0", Fundaq8Sheet::uniform(2), 100);
    EXPECT_EQ(r.score.value(), 1.0);
    t = svc.next_task("g1");
    EXPECT_EQ(t->image_id, "img1");
    EXPECT_EQ(t->remaining_count, 2u);
    EXPECT_EQ(svc.next_task("g2")->remaining_count, 3u);

    svc.submit("g1", "img1", Fundaq8Sheet::uniform(1), 101);
    svc.submit("g1", "img2", Fundaq8Sheet::uniform(0), 102);
    EXPECT_FALSE(svc.next_task("g1").has_value());
}

TEST(Service, RejectsInvalidAndUnknown) {
    TempDir d("ann");
    make_images(d, 2);
    AnnotateService svc(d / "images", d / "labels.log");
    auto s = Fundaq8Sheet::uniform(2);
    s[Attribute::vessels] = 3;
    try {
        svc.submit("g", "img0", s);
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status, 422);
        EXPECT_EQ(e.violations.count("vessels"), 1u);
    }
    try {
        svc.submit("g", "nope", Fundaq8Sheet::uniform(1));
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status, 404);
    }
    EXPECT_THROW(svc.submit("", "img0", Fundaq8Sheet::uniform(1)), ServiceError);
    EXPECT_EQ(svc.progress().records, 0u);
    EXPECT_EQ(slurp(d / "labels.log"), "");
}

TEST(Service, ProgressExportAndResubmission) {
    TempDir d("ann");
    make_images(d, 3);
    AnnotateService svc(d / "images", d / "labels.log");
    EXPECT_EQ(svc.export_labels(), csv::join(label_csv_header()));

    svc.submit("g1", "img0", Fundaq8Sheet::uniform(0), 1);
    svc.submit("g1", "img0", Fundaq8Sheet::uniform(2), 2);
    svc.submit("g1", "img1", Fundaq8Sheet::uniform(1), 3);
    svc.submit("g2", "img0", Fundaq8Sheet::uniform(1), 4);
    svc.submit("g2", "img2", Fundaq8Sheet::uniform(1), 5);

    const auto p = svc.progress();
    EXPECT_EQ(p.total_images, 3u);
    EXPECT_EQ(p.labeled_images, 3u);
    EXPECT_EQ(p.records, 5u);
    EXPECT_EQ(p.graders.at("g1").submitted, 2u);
    EXPECT_EQ(p.graders.at("g1").remaining, 1u);
    EXPECT_EQ(p.graders.at("g2").submitted, 2u);

    const auto exported = parse_labels(svc.export_labels());
    ASSERT_EQ(exported.size(), 4u);
    EXPECT_EQ(exported[0].image_id, "img0");
    EXPECT_EQ(exported[0].grader_id, "g1");
    EXPECT_EQ(exported[0].timestamp, 2);
    EXPECT_EQ(normalize_sheet(exported[0].sheet).value(), 1.0);
}

TEST(Service, RestartRecoversState) {
    TempDir d("ann");
    make_images(d, 2);
    std::string before;
    {
        AnnotateService svc(d / "images", d / "labels.log");
        svc.submit("g", "img0", Fundaq8Sheet::uniform(2), 10);
        svc.submit("h", "img1", Fundaq8Sheet::uniform(1), 11);
        before = svc.export_labels();
    }
    AnnotateService again(d / "images", d / "labels.log");
    EXPECT_EQ(again.export_labels(), before);
    EXPECT_EQ(again.next_task("g")->image_id, "img1");
    EXPECT_EQ(again.progress().records, 2u);
    EXPECT_THROW(AnnotateService(d / "absent", d / "l2.log"), std::runtime_error);
}

TEST(Submission, ParseViolations) {
    EXPECT_NO_THROW(parse_submission(body_for("g", "i", Fundaq8Sheet::uniform(1))));
    try {
        parse_submission("{");
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status, 400);
    }
    auto j = Json::parse(body_for("g", "i", Fundaq8Sheet::uniform(1)));
    j["scores"].erase("macula");
    j["scores"]["resolution"] = 1.5;
    j["scores"]["sharpness"] = 1;
    try {
        parse_submission(j.dump());
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status, 422);
        EXPECT_EQ(e.violations.size(), 3u);
        EXPECT_EQ(e.violations.count("macula"), 1u);
        EXPECT_EQ(e.violations.count("resolution"), 1u);
        EXPECT_EQ(e.violations.count("sharpness"), 1u);
    }
}

TEST(Http, EndpointsOverLoopback) {
    TempDir d("ann");
    make_images(d, 2);
    AnnotateService svc(d / "images", d / "labels.log");
    httplib::Server server;
    mount(server, svc);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client c("127.0.0.1", port);

    auto res = c.Get("/api/tasks/next?grader=alice");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    auto j = Json::parse(res->body);
    EXPECT_EQ(j["image_id"], "img0");
    EXPECT_EQ(j["remaining_count"], 2);

    res = c.Get("/api/tasks/next");
    EXPECT_EQ(res->status, 400);

    res = c.Get("/api/images/img1");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, "png1");
    EXPECT_EQ(c.Get("/api/images/zzz")->status, 404);

    res = c.Post("/api/labels", body_for("alice", "img0", Fundaq8Sheet::uniform(2)), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    j = Json::parse(res->body);
    EXPECT_EQ(j["stored"], true);
    EXPECT_EQ(j["score"], 1.0);

    auto bad = Fundaq8Sheet::uniform(2);
    bad[Attribute::optic_disc] = 3;
    res = c.Post("/api/labels", body_for("alice", "img1", bad), "application/json");
    EXPECT_EQ(res->status, 422);
    EXPECT_EQ(Json::parse(res->body)["violations"].count("optic_disc"), 1u);
    EXPECT_EQ(c.Post("/api/labels", body_for("alice", "ghost", Fundaq8Sheet::uniform(1)), "application/json")->status, 404);

    res = c.Get("/api/progress");
    j = Json::parse(res->body);
    EXPECT_EQ(j["overall"]["records"], 1);
    EXPECT_EQ(j["graders"]["alice"]["submitted"], 1);
    EXPECT_EQ(j["graders"]["alice"]["remaining"], 1);

    res = c.Get("/api/export");
    EXPECT_EQ(res->get_header_value("Content-Type"), "text/csv");
    const auto rows = parse_labels(res->body);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].grader_id, "alice");

    res = c.Get("/api/rubric");
    j = Json::parse(res->body);
    EXPECT_EQ(j["attributes"].size(), 8u);
    EXPECT_EQ(j["max_total"], 16);

    server.stop();
    th.join();
}
