/* Example of non PENCIL-compliant declarations.  */
void bar (int *(d[4])) {
  int *e;
}
