void drain(int n, int A[const restrict static n])
{
  int k = n;
#pragma pencil independent
  while (k > 0) {
    k -= 1;
    A[k] = 0;
  }
}
