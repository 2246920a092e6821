/* tslint:disable */
/* eslint-disable */

/**
 * Freeze plan and default training configuration for a synthetic decoder.
 */
export function freeze_plan(blocks: number, last_n_blocks: number, include_head: boolean, final_norm: boolean): string;

/**
 * One longest common subsequence of the normalized token streams.
 */
export function lcs_alignment(candidate: string, reference: string): string;

/**
 * All metrics for one candidate/reference pair, BERTScore via the hashed embedder.
 */
export function score_texts(candidate: string, reference: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly freeze_plan: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly lcs_alignment: (a: number, b: number, c: number, d: number) => [number, number];
    readonly score_texts: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
