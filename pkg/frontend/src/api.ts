import type { TaskKind } from "./contract";

export interface TaskItem {
    crop_id: string;
    task: TaskKind;
    image_url: string;
}

export interface ProgressCounts {
    labeled: number;
    total: number;
}

export type Progress = Record<TaskKind, ProgressCounts>;

export class ApiError extends Error {
    constructor(
        public readonly status: number,
        message: string,
    ) {
        super(message);
        this.name = "ApiError";
    }
}

async function errorMessage(response: Response): Promise<string> {
    try {
        const body = (await response.json()) as { error?: string };
        if (body && typeof body.error === "string") return body.error;
    } catch {
        // fall through to the status line
    }
    return `request failed with status ${response.status}`;
}

export class AnnotationApi {
    constructor(private readonly baseUrl: string = "") {}

    private async getJson<T>(path: string): Promise<T> {
        const response = await fetch(this.baseUrl + path);
        if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
        return (await response.json()) as T;
    }

    /** Next unlabeled crop for the task, or null when the task is done. */
    async next(task: TaskKind): Promise<TaskItem | null> {
        const body = await this.getJson<TaskItem | { done: true }>(
            `/api/next?task=${encodeURIComponent(task)}`,
        );
        return "done" in body ? null : body;
    }

    /** POST one label record; throws ApiError on 409/422/404. */
    async submit(cropId: string, task: TaskKind, labels: Record<string, unknown>): Promise<void> {
        const response = await fetch(this.baseUrl + "/api/labels", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ crop_id: cropId, task, labels }),
        });
        if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    }

    async progress(): Promise<Progress> {
        return this.getJson<Progress>("/api/progress");
    }

    imageUrl(path: string): string {
        return this.baseUrl + path;
    }
}
