#pragma once

#include <string>

#include "ccodec/abtest.hpp"

namespace httplib {
class Server;
}

namespace ccodec::abtest {

// JSON API:
//   POST /api/sessions                          manifest -> {session_id, trials}
//   GET  /api/sessions/{id}/next?listener=L     -> {trial_id, index, total, completed, audio_a, audio_b} or {done}
//   POST /api/sessions/{id}/votes               {trial_id, listener_id, score} -> {ok}
//   GET  /api/sessions/{id}/summary             -> summary
//   GET  /audio/{id}/{trial}/{A|B}              -> audio/wav
// Errors answer {"error": message} with the AbError status. Condition labels and
// presentation order never leave the server.
void install_routes(httplib::Server& server, Store& store);

// Blocks until the server stops.
void serve(Store& store, const std::string& host, int port);

} // namespace ccodec::abtest
