/* tslint:disable */
/* eslint-disable */

/**
 * A trained model loaded from DSVM or DNET bytes.
 */
export class Classifier {
    free(): void;
    [Symbol.dispose](): void;
    dropoutLayers(): number;
    kind(): string;
    constructor(bytes: Uint8Array);
    scores(pixels: Float32Array): Float32Array;
}

export function cnnGeometry(side: number): string[];

/**
 * Output extent of a convolution or pooling window sweep.
 */
export function convOutDim(input: number, padding: number, filter: number, stride: number): number;

export function dropoutMask(rate: number, seed: bigint, side: number): Float32Array;

export function prepareDrawing(rgba: Uint8Array, width: number, height: number): Float32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_classifier_free: (a: number, b: number) => void;
    readonly classifier_dropoutLayers: (a: number) => number;
    readonly classifier_kind: (a: number) => [number, number];
    readonly classifier_new: (a: number, b: number) => [number, number, number];
    readonly classifier_scores: (a: number, b: number, c: number) => [number, number, number, number];
    readonly cnnGeometry: (a: number) => [number, number, number, number];
    readonly convOutDim: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly dropoutMask: (a: number, b: bigint, c: number) => [number, number, number, number];
    readonly prepareDrawing: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
