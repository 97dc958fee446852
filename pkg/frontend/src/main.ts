/** Entry point: query parameters select the service, study, and subject.
 *
 *   index.html?service=http://127.0.0.1:8000&study=study-1&subject=alice
 *
 * Enrollment assigns the least-loaded session unless ?session=K is given.
 */

import { StudyApi } from "./api.js";
import { SessionController } from "./session.js";
import { mountRatingApp } from "./ui.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const service = params.get("service") ?? "http://127.0.0.1:8000";
  const study = params.get("study");
  const subject = params.get("subject");
  const root = document.getElementById("app") ?? document.body;

  if (!study || !subject) {
    root.textContent =
      "Missing query parameters: ?service=<url>&study=<id>&subject=<name>";
    return;
  }

  const api = new StudyApi(service);
  const sessionParam = params.get("session");
  let sessionId: number;
  if (sessionParam !== null) {
    await api.enroll(study, subject); // idempotent; ensures enrollment
    sessionId = Number(sessionParam);
  } else {
    const enrolled = await api.enroll(study, subject);
    sessionId = enrolled.session;
  }

  const controller = new SessionController(api, sessionId, subject);
  mountRatingApp(root, controller);
  await controller.start();
}

void boot();
