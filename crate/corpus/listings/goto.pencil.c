void clear(int n, int A[const restrict static n])
{
  int i = 0;
again:
  if (i < n) {
    A[i] = 0;
    i += 1;
    goto again;
  }
}
