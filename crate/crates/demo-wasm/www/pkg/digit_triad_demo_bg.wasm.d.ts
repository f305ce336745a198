/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_classifier_free: (a: number, b: number) => void;
export const classifier_dropoutLayers: (a: number) => number;
export const classifier_kind: (a: number) => [number, number];
export const classifier_new: (a: number, b: number) => [number, number, number];
export const classifier_scores: (a: number, b: number, c: number) => [number, number, number, number];
export const cnnGeometry: (a: number) => [number, number, number, number];
export const convOutDim: (a: number, b: number, c: number, d: number) => [number, number, number];
export const dropoutMask: (a: number, b: bigint, c: number) => [number, number, number, number];
export const prepareDrawing: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
