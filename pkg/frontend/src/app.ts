import { ApiClient } from "./api";
import { AnnotationView } from "./render";
import { DocumentSession, nextDocument } from "./session";
import type { DocRecord, Project, TrainJob } from "./types";

const POLL_MS = 1500;

/** Wire the whole single-page flow into `root`. */
export async function bootstrap(root: HTMLElement, api: ApiClient): Promise<void> {
  const doc = root.ownerDocument;
  const projects = await api.listProjects();
  root.replaceChildren();

  const sidebar = doc.createElement("aside");
  sidebar.className = "sidebar";
  const main = doc.createElement("main");
  main.className = "main";
  root.append(sidebar, main);

  const openProject = async (project: Project) => {
    sidebar.replaceChildren();
    const heading = doc.createElement("h2");
    heading.textContent = project.name;
    sidebar.appendChild(heading);

    const trainButton = doc.createElement("button");
    trainButton.className = "train";
    trainButton.textContent = "train model";
    const jobBadge = doc.createElement("span");
    jobBadge.className = "job-state";
    trainButton.addEventListener("click", async () => {
      try {
        const job = await api.startTrain(project.id);
        pollJob(api, job, jobBadge);
      } catch (err) {
        jobBadge.textContent = err instanceof Error ? err.message : String(err);
      }
    });
    sidebar.append(trainButton, jobBadge);

    const list = doc.createElement("ul");
    list.className = "doc-list";
    sidebar.appendChild(list);
    const docs = await api.listDocuments(project.id);
    for (const record of docs) {
      const item = doc.createElement("li");
      item.textContent = `${record.name || record.id} (${record.status})`;
      item.addEventListener("click", () => void openDocument(project, record));
      list.appendChild(item);
    }
  };

  const openDocument = async (project: Project, record: DocRecord) => {
    const session = await DocumentSession.open(api, project, record.id);
    main.replaceChildren();
    const host = doc.createElement("div");
    host.className = "annotation-host";
    main.appendChild(host);
    new AnnotationView(host, session);

    const nav = doc.createElement("div");
    nav.className = "doc-nav";
    const suggest = doc.createElement("button");
    suggest.textContent = "suggest";
    suggest.addEventListener("click", () => void session.requestSuggestions());
    const next = doc.createElement("button");
    next.textContent = "next document";
    next.addEventListener("click", async () => {
      const upcoming = await nextDocument(api, project.id, record.id);
      if (upcoming) void openDocument(project, upcoming);
    });
    nav.append(suggest, next);
    main.appendChild(nav);
  };

  const picker = doc.createElement("ul");
  picker.className = "project-list";
  for (const project of projects) {
    const item = doc.createElement("li");
    item.textContent = project.name;
    item.addEventListener("click", () => void openProject(project));
    picker.appendChild(item);
  }
  sidebar.appendChild(picker);
}

function pollJob(api: ApiClient, job: TrainJob, badge: HTMLElement): void {
  badge.textContent = `job ${job.state}`;
  const timer = setInterval(async () => {
    const current = await api.getJob(job.id);
    badge.textContent = `job ${current.state}`;
    if (current.state === "done" || current.state === "failed") {
      clearInterval(timer);
      if (current.state === "done") {
        badge.textContent = `model v${current.model_version} ready`;
      } else {
        badge.textContent = `training failed: ${current.error ?? "unknown"}`;
      }
    }
  }, POLL_MS);
}
