/** Console session: connection, current and previous reports, one
 * in-flight request at a time (a re-run supersedes the pending one). */

import { RegistryClient } from "./api.js";
import type { CaseRequest, CaseResponse, Report } from "./types.js";

export class ConsoleSession {
  client: RegistryClient;
  traceId: string | null = null;
  currentReport: Report | null = null;
  previousReport: Report | null = null;
  private controller: AbortController | null = null;

  constructor(address: string, token: string) {
    this.client = new RegistryClient(address, token);
  }

  /** Cancel any pending request and hand out the fresh signal. */
  beginRequest(): AbortSignal {
    if (this.controller) {
      this.controller.abort();
    }
    this.controller = new AbortController();
    return this.controller.signal;
  }

  async submit(request: CaseRequest): Promise<CaseResponse> {
    const signal = this.beginRequest();
    const response = await this.client.submitCase(request, signal);
    this.previousReport = this.currentReport;
    this.currentReport = response.report;
    this.traceId = response.trace_id;
    return response;
  }
}
