#include "ccodec/abtest_server.hpp"

#include <httplib.h>

#include <fstream>
#include <iostream>

namespace ccodec::abtest {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const AbError& e) {
            reply(res, e.status(), {{"error", e.what()}});
        } catch (const json::exception& e) {
            reply(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
        } catch (const std::exception& e) {
            reply(res, 500, {{"error", e.what()}});
        }
    };
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception&) {
        throw AbError(400, "request body is not valid JSON");
    }
}

} // namespace

void install_routes(httplib::Server& srv, Store& store) {
    srv.Post("/api/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                 const auto id = store.create(parse_body(req));
                 reply(res, 201, {{"session_id", id}, {"trials", store.get(id).size()}});
             }));

    srv.Get(R"(/api/sessions/([^/]+)/next)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                auto& s = store.get(req.matches[1]);
                const auto listener = req.get_param_value("listener");
                const auto next = s.next_for(listener);
                const auto done = s.completed_by(listener);
                if (!next) {
                    reply(res, 200, {{"done", true}, {"total", s.size()}, {"completed", done}});
                    return;
                }
                const auto& t = next->second;
                const std::string base = "/audio/" + s.id() + "/" + t.trial_id + "/";
                reply(res, 200,
                      {{"done", false},
                       {"trial_id", t.trial_id},
                       {"index", next->first},
                       {"total", s.size()},
                       {"completed", done},
                       {"audio_a", base + "A"},
                       {"audio_b", base + "B"}});
            }));

    srv.Post(R"(/api/sessions/([^/]+)/votes)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                 auto& s = store.get(req.matches[1]);
                 const auto body = parse_body(req);
                 if (!body.is_object() || !body.contains("trial_id") || !body["trial_id"].is_string() ||
                     !body.contains("listener_id") || !body["listener_id"].is_string() || !body.contains("score"))
                     throw AbError(400, "vote needs trial_id, listener_id and score");
                 s.record_vote(body["trial_id"], body["listener_id"], body["score"]);
                 reply(res, 201, {{"ok", true}, {"completed", s.completed_by(body["listener_id"])}, {"total", s.size()}});
             }));

    srv.Get(R"(/api/sessions/([^/]+)/summary)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, to_json(store.get(req.matches[1]).summary()));
            }));

    srv.Get(R"(/audio/([^/]+)/([^/]+)/([AB]))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const auto path = store.get(req.matches[1]).stimulus(req.matches[2], req.matches[3].str()[0]);
                std::ifstream in(path, std::ios::binary);
                if (!in) throw AbError(404, "audio file is no longer available");
                std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_content(std::move(bytes), "audio/wav");
            }));
}

void serve(Store& store, const std::string& host, int port) {
    httplib::Server srv;
    install_routes(srv, store);
    std::cerr << "abtest service listening on http://" << host << ":" << port << "\n";
    if (!srv.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

} // namespace ccodec::abtest
