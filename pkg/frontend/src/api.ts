import type { DocRecord, LabelDef, Project, Span, Status, TrainJob } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface SaveSpansRequest {
  spans: Span[];
  revision: number;
  editor?: string;
}

/** Thin typed wrapper over the annotation service HTTP API. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers["x-auth-token"] = this.token;
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "http-error";
      let message = `${method} ${path} failed with ${response.status}`;
      try {
        const payload = (await response.json()) as { code?: string; message?: string };
        code = payload.code ?? code;
        message = payload.message ?? message;
      } catch {
        // non-JSON error body; keep the fallback message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  createProject(name: string, labels?: LabelDef[]): Promise<Project> {
    return this.request("POST", "/projects", { name, labels });
  }

  listProjects(): Promise<Project[]> {
    return this.request("GET", "/projects");
  }

  getProject(projectId: string): Promise<Project> {
    return this.request("GET", `/projects/${projectId}`);
  }

  uploadDocuments(
    projectId: string,
    files: { name: string; text: string }[],
  ): Promise<{ count: number; records: DocRecord[] }> {
    return this.request("POST", `/projects/${projectId}/documents`, { files });
  }

  listDocuments(projectId: string, status?: Status): Promise<DocRecord[]> {
    const query = status ? `?status=${status}` : "";
    return this.request("GET", `/projects/${projectId}/documents${query}`);
  }

  getDocument(docId: string): Promise<DocRecord> {
    return this.request("GET", `/documents/${docId}`);
  }

  saveSpans(docId: string, body: SaveSpansRequest): Promise<DocRecord> {
    return this.request("PUT", `/documents/${docId}/spans`, body);
  }

  suggest(docId: string): Promise<DocRecord> {
    return this.request("POST", `/documents/${docId}/suggest`);
  }

  markReviewed(docId: string): Promise<DocRecord> {
    return this.request("POST", `/documents/${docId}/status`, { status: "reviewed" });
  }

  startTrain(projectId: string, config: Record<string, unknown> = {}): Promise<TrainJob> {
    return this.request("POST", `/projects/${projectId}/train`, config);
  }

  getJob(jobId: string): Promise<TrainJob> {
    return this.request("GET", `/jobs/${jobId}`);
  }
}
