// SPDX-License-Identifier: Apache-2.0
// Remote clients against in-process stub servers: a bridge that replays the
// simulator behind the wire protocol, and a scripted chat endpoint.
#include "countloop/error.hpp"
#include "countloop/llm.hpp"
#include "countloop/remote.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace countloop;
using namespace countloop::testing;

namespace {

class StubServer {
public:
    StubServer() = default;
    ~StubServer() { stop(); }

    httplib::Server& server() { return server_; }

    void start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

// Conformance mode: generate renders with the simulator, detect counts color
// components with the simulator palette.
void install_bridge(httplib::Server& s, std::atomic<int>& generate_calls) {
    s.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        ++generate_calls;
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        try {
            auto request = generate_request_from_json(body);
            auto png = encode_png(sim_generate(request.layout, {}).image);
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        } catch (const ProtocolError& e) {
            res.status = 422;
            res.set_content(e.what(), "text/plain");
        }
    });
    s.Post("/detect", [](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        try {
            auto request = detect_request_from_json(body);
            auto report = sim_detect(request.image, nullptr, request.categories, DetectMode::Pixel);
            res.set_content(nlohmann::json(report).dump(), "application/json");
        } catch (const ProtocolError& e) {
            res.status = 422;
            res.set_content(e.what(), "text/plain");
        }
    });
}

Layout ten_cats() {
    Rng rng(10);
    auto l = random_disjoint_layout(rng, 10, 512, 30, 60, 10, {"cat"});
    REQUIRE(l.boxes.size() == 10);
    return l;
}

nlohmann::json chat_body(const std::string& content) {
    return {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

ChatParams fast_params() {
    ChatParams p;
    p.model = "stub";
    p.initial_backoff = std::chrono::milliseconds(1);
    p.timeout = std::chrono::milliseconds(2000);
    return p;
}

int unused_port() {
    httplib::Server probe;
    int port = probe.bind_to_any_port("127.0.0.1");
    return port;  // released when probe goes out of scope
}

} // namespace

TEST_CASE("endpoint parsing") {
    auto e = Endpoint::parse("http://bridge.local:8080/api/");
    CHECK(e.host == "bridge.local");
    CHECK(e.port == 8080);
    CHECK(e.base_path == "/api");
    CHECK(e.path("/generate") == "/api/generate");
    CHECK(Endpoint::parse("https://example.org").port == 443);
    CHECK(Endpoint::parse("http://example.org").port == 80);
    CHECK_THROWS_AS(Endpoint::parse("ftp://example.org"), ConfigError);
    CHECK_THROWS_AS(Endpoint::parse("http://host:99999"), ConfigError);
}

TEST_CASE("wire codecs") {
    auto l = ten_cats();
    GenerateRequest req{l, "ten cats", "a garden", 7, 50};
    auto j = generate_request_json(req);
    CHECK(j["steps"] == 50);
    CHECK(j["layout"]["resolution"] == 512);
    auto back = generate_request_from_json(j);
    CHECK(back.layout == l);
    CHECK(back.prompt_bg == "a garden");
    CHECK(back.seed == 7);
    CHECK_THROWS_AS(generate_request_from_json(R"({"prompt_d":"x"})"_json), ProtocolError);
    CHECK_THROWS_AS(generate_request_from_json(R"({"layout":{"resolution":512,"boxes":[{"id":"a"}]}})"_json),
                    ProtocolError);

    Image img(4, 3);
    std::vector<std::string> cats{"cat"};
    auto d = detect_request_from_json(detect_request_json(img, cats, 0.3));
    CHECK(d.image == img);
    CHECK(d.categories == cats);
    CHECK(d.confidence == 0.3);
    CHECK_THROWS_AS(detect_request_from_json(R"({"image":"!!","categories":[]})"_json), ProtocolError);
    CHECK_THROWS_AS(detection_report_from_wire(R"({"counts":{"cat":-1}})"_json), ProtocolError);

    std::vector<ChatMessage> msgs{{"system", "s"}, {"user", "u"}};
    auto c = chat_request_json("m", msgs, 0.0);
    CHECK(c["model"] == "m");
    CHECK(c["messages"][1]["content"] == "u");
    CHECK(c["temperature"] == 0.0);
    CHECK(chat_reply_content(chat_body("hi")) == "hi");
    CHECK_THROWS_AS(chat_reply_content(R"({"choices":[]})"_json), EmptyReplyError);
    CHECK_THROWS_AS(chat_reply_content(chat_body("")), EmptyReplyError);
}

TEST_CASE("bridge conformance: generate and detect over HTTP") {
    std::atomic<int> calls{0};
    StubServer stub;
    install_bridge(stub.server(), calls);
    stub.start();
    auto ep = Endpoint::parse(stub.url());
    RemoteGenerator gen(ep);
    RemoteDetector det(ep);

    auto l = ten_cats();
    auto out = gen.generate({l, "10 cats", "", 42, 50});
    CHECK(out.image.width == 512);
    CHECK(out.image.height == 512);
    CHECK_FALSE(out.manifest);
    CHECK(out.image == sim_generate(l, {}).image);

    std::vector<std::string> cats{"cat"};
    auto report = det.detect(out.image, nullptr, cats, 0.3);
    CHECK(report.counts == CountMap{{"cat", 10}});
    CHECK(report.boxes.size() == 10);

    // A layout the bridge cannot decode is rejected with 422.
    auto bad = l;
    bad.boxes[0].bbox = {50, 50, 40, 60};
    CHECK_THROWS_AS(gen.generate({bad, "", "", 1, 50}), ProtocolError);
    CHECK(calls == 2);
}

TEST_CASE("remote generator checks the image size") {
    StubServer stub;
    stub.server().Post("/generate", [](const httplib::Request&, httplib::Response& res) {
        auto png = encode_png(Image(16, 16));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
    stub.server().Post("/detect", [](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("loading", "text/plain");
    });
    stub.start();
    auto ep = Endpoint::parse(stub.url());
    CHECK_THROWS_AS(RemoteGenerator(ep).generate({ten_cats(), "", "", 1, 50}), ProtocolError);
    std::vector<std::string> cats{"cat"};
    CHECK_THROWS_AS(RemoteDetector(ep).detect(Image(8, 8), nullptr, cats, 0.3), TransportError);
}

TEST_CASE("remote detector applies confidence and fills missing categories") {
    StubServer stub;
    stub.server().Post("/detect", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"counts":{"cat":3},"boxes":[
            {"category":"cat","bbox":[0,0,5,5],"confidence":0.9},
            {"category":"cat","bbox":[10,0,15,5],"confidence":0.2},
            {"category":"cat","bbox":[20,0,25,5],"confidence":0.5}]})",
                        "application/json");
    });
    stub.start();
    std::vector<std::string> cats{"cat", "dog"};
    auto r = RemoteDetector(Endpoint::parse(stub.url())).detect(Image(8, 8), nullptr, cats, 0.3);
    CHECK(r.counts == CountMap{{"cat", 2}, {"dog", 0}});
}

TEST_CASE("chat client retries server errors") {
    std::atomic<int> hits{0};
    std::string seen_auth;
    StubServer stub;
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        if (++hits <= 2) {
            res.status = 500;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        CHECK(body["model"] == "stub");
        res.set_content(chat_body(R"(```json
{"objects":[{"id":"cat 1","pos":[0.3,0.6],"d":0.4,"size":[0.2,0.25]},{"id":"cat 2","pos":[0.6,0.65],"d":0.4,"size":[0.2,0.25]}]}
```)").dump(),
                        "application/json");
    });
    stub.start();
    auto params = fast_params();
    params.api_key = "sekrit";
    HttpChatClient client(Endpoint::parse(stub.url()), params);
    std::vector<ChatMessage> msgs{{"user", "plan"}};
    auto reply = client.chat(msgs);
    CHECK(hits == 3);
    CHECK(seen_auth == "Bearer sekrit");
    CHECK(parse_llm_json(reply).targets == CountMap{{"cat", 2}});
}

TEST_CASE("chat client failure modes") {
    std::atomic<int> hits{0};
    StubServer stub;
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auto body = nlohmann::json::parse(req.body);
        auto mode = body["messages"][0]["content"].get<std::string>();
        if (mode == "limit")
            res.status = 429;
        else if (mode == "bad")
            res.status = 400;
        else
            res.set_content(chat_body("").dump(), "application/json");
    });
    stub.start();
    HttpChatClient client(Endpoint::parse(stub.url()), fast_params());

    std::vector<ChatMessage> limit{{"user", "limit"}};
    CHECK_THROWS_AS(client.chat(limit), RateLimitError);
    CHECK(hits == 3);

    hits = 0;
    std::vector<ChatMessage> bad{{"user", "bad"}};
    CHECK_THROWS_AS(client.chat(bad), BackendError);
    CHECK(hits == 1);

    hits = 0;
    std::vector<ChatMessage> empty{{"user", "empty"}};
    CHECK_THROWS_AS(client.chat(empty), EmptyReplyError);
    CHECK(hits == 3);
}

TEST_CASE("unreachable endpoints raise TransportError") {
    auto url = "http://127.0.0.1:" + std::to_string(unused_port());
    HttpChatClient client(Endpoint::parse(url), fast_params());
    std::vector<ChatMessage> msgs{{"user", "x"}};
    CHECK_THROWS_AS(client.chat(msgs), TransportError);
    RemoteOptions opts;
    opts.timeout = std::chrono::milliseconds(1000);
    CHECK_THROWS_AS(RemoteGenerator(Endpoint::parse(url), opts).generate({ten_cats(), "", "", 1, 50}), TransportError);
}

TEST_CASE("LLM planner keeps the draft unless the reply is a valid same-count graph") {
    struct Scripted : ChatClient {
        std::string reply;
        std::string chat(std::span<const ChatMessage> messages) override {
            REQUIRE(messages.size() == 2);
            CHECK(messages[1].content.find("['Object']") != std::string::npos);
            return reply;
        }
    };
    auto draft = build_graph(parse_prompt("two cats and a bird in the sky"), 1);
    Scripted llm;
    llm.reply = read_file(fixture("planning_graph_cats_bird.json"));
    std::string note;
    auto planned = llm_plan(llm, draft, "two cats and a bird in the sky", &note);
    CHECK(note.empty());
    CHECK(planned == read_json(fixture("planning_graph_cats_bird.json")).get<PlanningGraph>());

    llm.reply = R"({"objects":[{"id":"cat 1","pos":[0.3,0.6],"d":0.4,"size":[0.2,0.25]}]})";
    CHECK(llm_plan(llm, draft, "p", &note) == draft);
    CHECK_FALSE(note.empty());

    note.clear();
    llm.reply = "I cannot help with that.";
    CHECK(llm_plan(llm, draft, "p", &note) == draft);
    CHECK_FALSE(note.empty());
}

TEST_CASE("prompt templates carry the inputs") {
    auto g = read_json(fixture("planning_graph_cats_bird.json")).get<PlanningGraph>();
    auto designer = layout_designer_messages(g, "two cats and a bird");
    REQUIRE(designer.size() == 2);
    CHECK(designer[0].role == "system");
    CHECK(designer[1].content.find("two cats and a bird") != std::string::npos);
    CHECK(designer[1].content.find("bird_1") != std::string::npos);

    auto l = realize_layout(g, 1024);
    DetectionReport det;
    det.counts = {{"cat", 1}, {"bird", 1}};
    auto critic = critic_messages("two cats and a bird", l, det, {{"cat", 2}, {"bird", 1}}, 0.9, 0.7);
    REQUIRE(critic.size() == 2);
    CHECK(critic[0].content.find("continue_refinement") != std::string::npos);
    CHECK(critic[1].content.find("cat_2") != std::string::npos);
}
