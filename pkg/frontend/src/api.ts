/** Typed client for the table-search service API. */

export interface TripleView {
  text: string;
  score: number;
}

export interface ResultView {
  table_id: string;
  title: string;
  score: number;
  triples: TripleView[];
}

export interface QueryResponse {
  results: ResultView[];
}

export interface TableView {
  table_id: string;
  title: string;
  columns: { name: string; inferred_type: string }[];
  rows: string[][];
}

/** Service not ready yet (HTTP 503): the index/model is still loading. */
export class ServiceUnavailableError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ServiceUnavailableError";
  }
}

/** Resource does not exist (HTTP 404). */
export class NotFoundError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "NotFoundError";
  }
}

/** The request never reached the service (fetch rejected). */
export class NetworkError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "NetworkError";
  }
}

/** Any other non-2xx response. */
export class ApiError extends Error {
  readonly status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = `${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  if (response.status === 503) throw new ServiceUnavailableError(detail);
  if (response.status === 404) throw new NotFoundError(detail);
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async query(question: string, k: number): Promise<QueryResponse> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/query`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ question, k }),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    await raiseForStatus(response);
    return (await response.json()) as QueryResponse;
  }

  async table(tableId: string): Promise<TableView> {
    let response: Response;
    try {
      response = await this.fetchFn(
        `${this.baseUrl}/tables/${encodeURIComponent(tableId)}`,
      );
    } catch (err) {
      throw new NetworkError(String(err));
    }
    await raiseForStatus(response);
    return (await response.json()) as TableView;
  }
}
