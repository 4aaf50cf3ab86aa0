int product(int n, int A[const restrict static n])
{
  int p = 1;
#pragma pencil reduction (*:p)
  for (int i = 0; i < n; i++)
    p *= A[i] % 3 + 1;
  return p;
}
